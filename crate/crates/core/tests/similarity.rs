use std::io::Write;
use std::sync::Arc;

use embeval::compose::{EncoderSpec, PrecomputedVectors};
use embeval::corpus::{Pair, PairDataset, PairSplit, Sentence};
use embeval::evaluators::{
    build_pair_features, eval_learned_similarity, eval_ucp, train_similarity_regressor, Ridge,
    SimilarityModel, DEFAULT_L2_GRID,
};
use embeval::linalg::Matrix;
use embeval::normalize::SplitTag;
use embeval::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn split(tag: SplitTag, golds: &[f64], first_id: usize) -> PairSplit {
    let pairs = golds
        .iter()
        .enumerate()
        .map(|(k, &gold)| Pair {
            a: Sentence::new(format!("left {k}")),
            b: Sentence::new(format!("right {k}")),
            gold,
        })
        .collect();
    PairSplit {
        tag,
        pairs,
        first_id,
    }
}

/// Writes `id<TAB>values` rows and loads them back as an encoder.
fn precomputed(rows: &[Vec<f64>]) -> (tempfile::NamedTempFile, EncoderSpec) {
    let mut file = tempfile::NamedTempFile::new().unwrap();
    for (id, r) in rows.iter().enumerate() {
        let values: Vec<String> = r.iter().map(|v| format!("{v:e}")).collect();
        writeln!(file, "{id}\t{}", values.join(" ")).unwrap();
    }
    file.flush().unwrap();
    let vectors = PrecomputedVectors::load(file.path()).unwrap();
    (file, EncoderSpec::Precomputed(Arc::new(vectors)))
}

#[test]
fn perfect_cosine_predictor_has_unit_correlation() {
    let golds = [0.0, 1.2, 2.5, 3.3, 4.0, 5.0];
    let mut rows = Vec::new();
    for g in golds {
        let c: f64 = g / 5.0;
        rows.push(vec![1.0, 0.0]);
        rows.push(vec![c, (1.0 - c * c).sqrt()]);
    }
    let (_file, spec) = precomputed(&rows);
    let r = eval_ucp(&split(SplitTag::Test, &golds, 0), &spec.build().unwrap(), false).unwrap();
    assert!((r.pearson - 1.0).abs() < 1e-12);
    assert!((r.spearman - 1.0).abs() < 1e-12);
    assert_eq!((r.n_pairs, r.skipped_pairs), (6, 0));
}

#[test]
fn zero_vector_pairs_are_skipped_and_counted() {
    let rows = vec![
        vec![1.0, 0.0],
        vec![1.0, 1.0],
        vec![0.0, 0.0],
        vec![1.0, 1.0],
        vec![0.0, 1.0],
        vec![1.0, 0.2],
        vec![1.0, 0.0],
        vec![0.3, 1.0],
    ];
    let (_file, spec) = precomputed(&rows);
    let golds = [3.0, 1.0, 2.0, 4.0];
    let r = eval_ucp(&split(SplitTag::Test, &golds, 0), &spec.build().unwrap(), false).unwrap();
    assert_eq!((r.n_pairs, r.skipped_pairs), (4, 1));

    let all_zero = vec![vec![0.0, 0.0]; 2];
    let (_file, spec) = precomputed(&all_zero);
    assert!(eval_ucp(&split(SplitTag::Test, &[1.0], 0), &spec.build().unwrap(), false).is_err());
}

#[test]
fn missing_precomputed_id_is_named() {
    let (_file, spec) = precomputed(&[vec![1.0], vec![2.0]]);
    let err = eval_ucp(&split(SplitTag::Test, &[1.0, 2.0], 0), &spec.build().unwrap(), false)
        .unwrap_err();
    assert!(matches!(err, Error::MissingId(2)));
    assert!(err.to_string().contains('2'));
}

/// Full-batch gradient descent on the same objective as the ridge solver.
fn gradient_descent_ridge(x: &Matrix, y: &[f64], l2: f64) -> (Vec<f64>, f64) {
    let (n, p) = (x.rows() as f64, x.cols());
    let mut w = vec![0.0; p];
    let mut b = 0.0;
    let step = 0.05;
    for _ in 0..200_000 {
        let mut gw = vec![0.0; p];
        let mut gb = 0.0;
        for (r, t) in x.iter_rows().zip(y) {
            let e = r.iter().zip(&w).map(|(a, c)| a * c).sum::<f64>() + b - t;
            for (g, a) in gw.iter_mut().zip(r) {
                *g += 2.0 * e * a / n;
            }
            gb += 2.0 * e / n;
        }
        for (g, wi) in gw.iter_mut().zip(&w) {
            *g += 2.0 * l2 * wi;
        }
        let size: f64 = gw.iter().map(|g| g * g).sum::<f64>() + gb * gb;
        for (wi, g) in w.iter_mut().zip(&gw) {
            *wi -= step * g;
        }
        b -= step * gb;
        if size.sqrt() < 1e-13 {
            break;
        }
    }
    (w, b)
}

#[test]
fn ridge_matches_gradient_descent_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let rows: Vec<Vec<f64>> = (0..20)
        .map(|_| {
            let u: Vec<f64> = (0..2).map(|_| rng.random_range(-1.0..1.0)).collect();
            let v: Vec<f64> = (0..2).map(|_| rng.random_range(-1.0..1.0)).collect();
            build_pair_features(&u, &v)
        })
        .collect();
    let x = Matrix::from_rows(&rows).unwrap();
    let y: Vec<f64> = (0..20).map(|_| rng.random_range(0.0..1.0)).collect();
    for l2 in [1e-3, 0.1] {
        let ridge = Ridge::fit(&x, &y, l2).unwrap();
        let (w, b) = gradient_descent_ridge(&x, &y, l2);
        for (a, c) in ridge.weights.iter().zip(&w) {
            assert!((a - c).abs() <= 1e-4, "l2 {l2}: {a} vs {c}");
        }
        assert!((ridge.bias - b).abs() <= 1e-4);
    }
}

#[test]
fn huge_penalty_predicts_the_mean() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = Matrix::from_vec(30, 4, (0..120).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
    let y: Vec<f64> = (0..30).map(|_| rng.random_range(0.0..1.0)).collect();
    let mean = y.iter().sum::<f64>() / 30.0;
    let ridge = Ridge::fit(&x, &y, 1e12).unwrap();
    for r in x.iter_rows() {
        assert!((ridge.predict(r) - mean).abs() < 1e-9);
    }
}

/// Pairs whose scaled gold is an exact linear function of the pair
/// features; ids run over train, dev and test in that order.
fn realizable(n_train: usize, n_dev: usize, n_test: usize) -> (tempfile::NamedTempFile, EncoderSpec, PairDataset) {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let weights = [0.15, -0.1, 0.2, 0.1, -0.05, 0.12];
    let total = n_train + n_dev + n_test;
    let mut rows = Vec::new();
    let mut golds = Vec::new();
    for _ in 0..total {
        let u: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let v: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let f = build_pair_features(&u, &v);
        let t = 0.5 + f.iter().zip(weights).map(|(a, w)| a * w).sum::<f64>();
        golds.push(5.0 * t);
        rows.push(u);
        rows.push(v);
    }
    let (file, spec) = precomputed(&rows);
    let data = PairDataset {
        train: Some(split(SplitTag::Train, &golds[..n_train], 0)),
        dev: Some(split(SplitTag::Dev, &golds[n_train..n_train + n_dev], 2 * n_train)),
        test: Some(split(SplitTag::Test, &golds[n_train + n_dev..], 2 * (n_train + n_dev))),
    };
    (file, spec, data)
}

#[test]
fn realizable_target_is_recovered() {
    let (_file, spec, data) = realizable(200, 50, 50);
    let model = train_similarity_regressor(&data, &spec.build().unwrap(), false, &DEFAULT_L2_GRID).unwrap();
    assert_eq!(model.ridge.l2, DEFAULT_L2_GRID[0]);
    let r = eval_learned_similarity(&model, data.test.as_ref().unwrap()).unwrap();
    assert!(r.mse <= 1e-6, "mse {}", r.mse);
    assert!(r.pearson.unwrap() >= 0.999);
    assert_eq!(r.n_pairs, 50);
}

#[test]
fn normalized_regressor_fits_on_train_only() {
    let (_file, spec, data) = realizable(100, 30, 30);
    let model = train_similarity_regressor(&data, &spec.build().unwrap(), true, &DEFAULT_L2_GRID).unwrap();
    let stats = model.norm.as_ref().unwrap();
    assert_eq!(stats.fitted_on, SplitTag::Train);
    assert!(model.normalized());
    let r = eval_learned_similarity(&model, data.test.as_ref().unwrap()).unwrap();
    assert!(r.mse.is_finite());
}

#[test]
fn regressor_needs_a_dev_split() {
    let (_file, spec, mut data) = realizable(20, 5, 5);
    data.dev = None;
    assert!(train_similarity_regressor(&data, &spec.build().unwrap(), false, &DEFAULT_L2_GRID).is_err());
}

#[test]
fn constant_model_reports_mse_without_correlations() {
    let (_file, spec, data) = realizable(10, 5, 12);
    let model = SimilarityModel {
        ridge: Ridge {
            weights: vec![0.0; 6],
            bias: 0.5,
            l2: 1.0,
        },
        encoder: spec.build().unwrap(),
        norm: None,
        dev_pearson: 0.0,
        diagnostics: Default::default(),
    };
    let test = data.test.as_ref().unwrap();
    let r = eval_learned_similarity(&model, test).unwrap();
    assert_eq!(r.pearson, None);
    assert_eq!(r.spearman, None);
    let gold = test.gold();
    let expected = gold.iter().map(|g| (g - 2.5).powi(2)).sum::<f64>() / gold.len() as f64;
    assert!((r.mse - expected).abs() < 1e-12);
}

proptest! {
    #[test]
    fn learned_similarity_is_symmetric(
        u in prop::collection::vec(-2.0f64..2.0, 3),
        v in prop::collection::vec(-2.0f64..2.0, 3),
        w in prop::collection::vec(-1.0f64..1.0, 6),
        b in -1.0f64..1.0,
    ) {
        prop_assert_eq!(build_pair_features(&u, &v), build_pair_features(&v, &u));
        let (_file, spec) = precomputed(&[vec![0.0; 3]]);
        let model = SimilarityModel {
            ridge: Ridge { weights: w, bias: b, l2: 0.0 },
            encoder: spec.build().unwrap(),
            norm: None,
            dev_pearson: 0.0,
            diagnostics: Default::default(),
        };
        prop_assert_eq!(model.predict_scaled(&u, &v), model.predict_scaled(&v, &u));
    }
}

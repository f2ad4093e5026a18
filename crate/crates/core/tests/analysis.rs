use std::collections::BTreeMap;
use std::sync::Arc;

use embeval::analysis::{
    classifier_gains, dispersion_report, normalization_delta, size_sweep,
    transfer_probing_correlation, Provenance, ScoreTable, TaskKind,
};
use embeval::compose::{Diagnostics, EncoderSpec};
use embeval::corpus::{LabeledDataset, Sentence, SplitPolicy};
use embeval::evaluators::{ClassifierKind, ClassifierSpec, EvalResult, Protocol};
use embeval::wordvec::WordVectors;
use embeval::Error;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const ENCODERS: [&str; 9] = [
    "glove-300", "w2v-300", "w2v-800", "infersent-4096", "sif-glove-300", "sif-w2v-300",
    "use-512", "sent2vec-700", "pmean-3600",
];
const STANDARD: [f64; 9] = [0.41, 0.56, 0.56, 0.67, 0.66, 0.67, 0.70, 0.67, 0.64];
const NORMALIZED: [f64; 9] = [0.62, 0.65, 0.67, 0.67, 0.67, 0.67, 0.70, 0.71, 0.66];
const DELTA: [f64; 9] = [21.0, 9.0, 11.0, 0.0, 1.0, 0.0, 0.0, 4.0, 2.0];

/// Rank of each value among three, averaging ties, by pairwise comparison.
fn rank3(x: [f64; 3]) -> [f64; 3] {
    let mut r = [0.0; 3];
    for i in 0..3 {
        let below = x.iter().filter(|&&v| v < x[i]).count() as f64;
        let tied = x.iter().filter(|&&v| v == x[i]).count() as f64;
        r[i] = below + (tied + 1.0) / 2.0;
    }
    r
}

fn oracle_rho(x: [f64; 3], y: [f64; 3]) -> Option<f64> {
    let (rx, ry) = (rank3(x), rank3(y));
    let m = 2.0; // mean rank of three items
    let cov: f64 = (0..3).map(|i| (rx[i] - m) * (ry[i] - m)).sum();
    let vx: f64 = rx.iter().map(|r| (r - m).powi(2)).sum();
    let vy: f64 = ry.iter().map(|r| (r - m).powi(2)).sum();
    (vx > 0.0 && vy > 0.0).then(|| cov / (vx * vy).sqrt())
}

fn columns3(alphabet: &[f64]) -> Vec<[f64; 3]> {
    let mut out = Vec::new();
    for &a in alphabet {
        for &b in alphabet {
            for &c in alphabet {
                out.push([a, b, c]);
            }
        }
    }
    out
}

fn table(cols: &[(&str, TaskKind, [f64; 3])]) -> ScoreTable {
    let mut t = ScoreTable::new(Provenance::Internal);
    for (task, kind, values) in cols {
        for (e, v) in ["e1", "e2", "e3"].iter().zip(values) {
            t.insert(e, task, *kind, *v).unwrap();
        }
    }
    t
}

#[test]
fn correlation_matches_rank_enumeration_on_three_encoders() {
    let all = columns3(&[0.1, 0.5, 0.9]);
    let mut defined = 0;
    for x in &all {
        for y in &all {
            let t = table(&[("t", TaskKind::Transfer, *x), ("p", TaskKind::Probing, *y)]);
            let report = transfer_probing_correlation(&t).unwrap();
            match (report.cells[0][0], oracle_rho(*x, *y)) {
                (Some(a), Some(b)) => {
                    assert!((a - b).abs() < 1e-12, "{x:?} {y:?}");
                    defined += 1;
                }
                (None, None) => assert_eq!(report.undefined_cells, 1),
                (a, b) => panic!("{x:?} {y:?}: {a:?} vs {b:?}"),
            }
        }
    }
    // 27 columns, 3 of them constant: 24 × 24 defined cells
    assert_eq!(defined, 24 * 24);
}

#[test]
fn averages_skip_undefined_cells() {
    let t = table(&[
        ("t1", TaskKind::Transfer, [1.0, 2.0, 3.0]),
        ("t2", TaskKind::Transfer, [3.0, 1.0, 2.0]),
        ("p1", TaskKind::Probing, [0.2, 0.4, 0.9]),
        ("p2", TaskKind::Probing, [0.5, 0.5, 0.5]),
    ]);
    let r = transfer_probing_correlation(&t).unwrap();
    let c11 = oracle_rho([1.0, 2.0, 3.0], [0.2, 0.4, 0.9]).unwrap();
    let c21 = oracle_rho([3.0, 1.0, 2.0], [0.2, 0.4, 0.9]).unwrap();
    assert_eq!(r.undefined_cells, 2);
    assert_eq!(r.probing_averages[1], None);
    assert!((r.probing_averages[0].unwrap() - (c11 + c21) / 2.0).abs() < 1e-12);
    assert!((r.grand_mean.unwrap() - (c11 + c21) / 2.0).abs() < 1e-12);
}

fn sts_pair_results() -> Vec<EvalResult> {
    let mut out = Vec::new();
    for (i, e) in ENCODERS.iter().enumerate() {
        for (normalized, score) in [(false, STANDARD[i]), (true, NORMALIZED[i])] {
            out.push(EvalResult {
                task: "stsbench".into(),
                encoder: e.to_string(),
                embedding_size: 300,
                protocol: Protocol::Ucp,
                classifier: "cosine".into(),
                normalized,
                metrics: BTreeMap::from([("pearson".to_string(), score)]),
                hyperparams: BTreeMap::new(),
                converged: true,
                diagnostics: Diagnostics::default(),
            });
        }
    }
    out
}

#[test]
fn reference_deltas_are_reproduced() {
    let mut results = sts_pair_results();
    results.reverse();
    let rows = normalization_delta(&results).unwrap();
    assert_eq!(rows.len(), 9);
    for (i, e) in ENCODERS.iter().enumerate() {
        let row = rows.iter().find(|r| r.encoder == *e).unwrap();
        assert!((row.delta_pp - DELTA[i]).abs() < 1e-9, "{e}: {}", row.delta_pp);
        assert_eq!(row.delta_pp.round(), DELTA[i]);
        assert_eq!(row.standard, STANDARD[i]);
        assert_eq!(row.normalized, NORMALIZED[i]);
    }
}

#[test]
fn delta_needs_both_sides() {
    let mut results = sts_pair_results();
    results.remove(1);
    assert!(matches!(
        normalization_delta(&results),
        Err(Error::MissingCounterpart(e)) if e == ENCODERS[0]
    ));
}

fn dispersion_table(order: &[usize]) -> ScoreTable {
    let mut t = ScoreTable::new(Provenance::Internal);
    for &i in order {
        t.insert(ENCODERS[i], "standard", TaskKind::Transfer, STANDARD[i]).unwrap();
        t.insert(ENCODERS[i], "normalized", TaskKind::Transfer, NORMALIZED[i]).unwrap();
    }
    t
}

#[test]
fn dispersion_report_on_reference_columns() {
    let cols = ["standard".to_string(), "normalized".to_string()];
    let report = dispersion_report(&dispersion_table(&(0..9).collect::<Vec<_>>()), &cols).unwrap();
    assert!((report[0].range - 0.29).abs() < 1e-9);
    assert!((report[0].std - 0.086).abs() <= 0.001);
    assert!((report[1].range - 0.09).abs() < 1e-9);
    assert!((report[1].std - 0.024).abs() <= 0.001);
    assert_eq!(report[0].n, 9);

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..10 {
        let mut order: Vec<usize> = (0..9).collect();
        order.shuffle(&mut rng);
        assert_eq!(dispersion_report(&dispersion_table(&order), &cols).unwrap(), report);
    }
}

#[test]
fn score_table_csv_round_trip() {
    let t = dispersion_table(&(0..9).collect::<Vec<_>>());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scores.csv");
    t.write_csv(&path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("encoder,task,kind,score\n"));
    let back = ScoreTable::from_csv(&path).unwrap();
    assert_eq!(back.encoders(), t.encoders());
    for e in ENCODERS {
        assert_eq!(back.get(e, "standard"), t.get(e, "standard"));
    }
    assert_eq!(back.provenance(), Provenance::External);
}

fn sign_task(seed: u64) -> (LabeledDataset, Arc<WordVectors>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut entries = Vec::new();
    let mut examples = Vec::new();
    for i in 0..40 {
        let v: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        examples.push((Sentence::new(format!("w{i}")), usize::from(v[0] + v[1] > 0.0)));
        entries.push((format!("w{i}"), v));
    }
    let wv = Arc::new(WordVectors::from_entries("base", 4, entries).unwrap());
    let data = LabeledDataset {
        examples,
        n_classes: 2,
        split_policy: SplitPolicy::CrossValidation { k: 4, seed },
    };
    (data, wv)
}

fn sweep_classifier() -> ClassifierSpec {
    let mut spec = ClassifierSpec::new(ClassifierKind::LogisticRegression);
    spec.l2_grid = vec![1e-3, 1e-1];
    spec.inner_folds = 3;
    spec
}

#[test]
fn size_sweep_bookkeeping_and_determinism() {
    let (data, wv) = sign_task(1);
    let tasks = vec![("signs".to_string(), &data)];
    let generator = |size: usize| {
        Ok(EncoderSpec::RandomProject {
            vectors: wv.clone(),
            target_dim: size,
            seed: 5,
        })
    };
    let references = vec![("avg".to_string(), EncoderSpec::Average { vectors: wv.clone() })];
    let run = || {
        size_sweep("proj", &tasks, generator, &[8, 16], &references, &sweep_classifier(), false).unwrap()
    };
    let sweep = run();
    assert_eq!(sweep.points.iter().map(|p| p.size).collect::<Vec<_>>(), vec![8, 16]);
    assert_eq!(sweep.references[0].size, 4);
    assert_eq!(sweep.results.len(), 3);
    assert_eq!(
        sweep.results.iter().map(|r| r.embedding_size).collect::<Vec<_>>(),
        vec![8, 16, 4]
    );
    assert_eq!(run(), sweep);

    let single = size_sweep("proj", &tasks, generator, &[8], &[], &sweep_classifier(), false).unwrap();
    assert_eq!(single.points.len(), 1);
    assert!(size_sweep("proj", &tasks, generator, &[16, 8], &[], &sweep_classifier(), false).is_err());
}

#[test]
fn classifier_gain_is_recorded_per_encoder() {
    let (data, wv) = sign_task(2);
    let encoder = EncoderSpec::Average { vectors: wv }.build().unwrap();
    let mut results = Vec::new();
    for kind in [ClassifierKind::LogisticRegression, ClassifierKind::Mlp] {
        let mut spec = sweep_classifier();
        spec.kind = kind;
        spec.hidden_sizes = vec![8];
        results.push(
            embeval::evaluators::run_transfer_task("signs", &data, "avg", &encoder, &spec, false).unwrap(),
        );
    }
    let gains = classifier_gains(&results);
    assert_eq!(gains.len(), 1);
    let g = &gains[0];
    assert_eq!(g.encoder, "avg");
    assert!((g.gain_pp - 100.0 * (g.mlp - g.logreg)).abs() < 1e-12);
    assert_eq!(results[1].hyperparams.get("hidden").map(String::as_str), Some("8/8/8/8"));
}

proptest! {
    #[test]
    fn correlation_is_invariant_to_monotone_column_rescaling(
        seed in 0u64..10_000,
        n in 3usize..9,
        scale in 0.1f64..10.0,
        shift in -5.0f64..5.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut a = ScoreTable::new(Provenance::Internal);
        let mut b = ScoreTable::new(Provenance::Internal);
        let cols = [("t1", TaskKind::Transfer), ("t2", TaskKind::Transfer), ("p1", TaskKind::Probing), ("p2", TaskKind::Probing)];
        for e in 0..n {
            for (j, (task, kind)) in cols.iter().enumerate() {
                let v: f64 = rng.random_range(0.0..1.0);
                a.insert(&format!("e{e}"), task, *kind, v).unwrap();
                // a different strictly increasing map per column
                let g = match j {
                    0 => scale * v + shift,
                    1 => v.powi(3),
                    2 => (v + 0.1).ln(),
                    _ => (2.0 * v).exp() * scale,
                };
                b.insert(&format!("e{e}"), task, *kind, g).unwrap();
            }
        }
        let (ra, rb) = (transfer_probing_correlation(&a).unwrap(), transfer_probing_correlation(&b).unwrap());
        for (x, y) in ra.cells.iter().flatten().zip(rb.cells.iter().flatten()) {
            match (x, y) {
                (Some(x), Some(y)) => prop_assert!((x - y).abs() < 1e-12),
                (None, None) => {}
                _ => prop_assert!(false, "definedness changed"),
            }
        }
    }
}

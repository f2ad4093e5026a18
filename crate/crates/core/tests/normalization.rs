use embeval::linalg::{dot, norm, Matrix};
use embeval::metrics::cosine;
use embeval::normalize::{apply_znorm, fit_znorm, normalize_ucp, standardize, SplitTag};
use embeval::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..rows * cols)
        .map(|i| rng.random_range(-3.0..3.0) + (i % cols) as f64)
        .collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

/// Two-pass oracle written against plain nested vectors.
fn oracle_stats(x: &Matrix) -> (Vec<f64>, Vec<f64>) {
    let rows: Vec<Vec<f64>> = x.iter_rows().map(<[f64]>::to_vec).collect();
    let n = rows.len() as f64;
    let cols = rows[0].len();
    let mut means = Vec::new();
    let mut stds = Vec::new();
    for j in 0..cols {
        let col: Vec<f64> = rows.iter().map(|r| r[j]).collect();
        let m = col.iter().sum::<f64>() / n;
        let v = col.iter().map(|c| (c - m).powi(2)).sum::<f64>() / n;
        means.push(m);
        stds.push(v.sqrt());
    }
    (means, stds)
}

#[test]
fn fit_matches_two_pass_oracle() {
    let x = random_matrix(100, 5, 11);
    let stats = fit_znorm(&x, SplitTag::Train).unwrap();
    let (means, stds) = oracle_stats(&x);
    for j in 0..5 {
        assert!((stats.mean[j] - means[j]).abs() <= 1e-12);
        assert!((stats.std[j] - stds[j]).abs() <= 1e-12);
    }
    assert!(stats.degenerate.is_empty());
}

#[test]
fn standardized_columns_are_centered_and_unit_variance() {
    for seed in 0..5 {
        let x = random_matrix(64, 7, seed);
        let stats = fit_znorm(&x, SplitTag::Train).unwrap();
        let z = standardize(&stats, &x).unwrap();
        let (means, stds) = oracle_stats(&z);
        for j in 0..7 {
            assert!(means[j].abs() <= 1e-10);
            assert!((stds[j] * stds[j] - 1.0).abs() <= 1e-10);
        }
    }
}

#[test]
fn normalized_rows_have_unit_norm() {
    let x = random_matrix(50, 6, 3);
    let stats = fit_znorm(&x, SplitTag::Train).unwrap();
    let out = apply_znorm(&stats, &random_matrix(20, 6, 4)).unwrap();
    for (i, r) in out.matrix.iter_rows().enumerate() {
        if out.zero_rows.contains(&i) {
            assert!(r.iter().all(|v| *v == 0.0));
        } else {
            assert!((norm(r) - 1.0).abs() <= 1e-12);
        }
    }
}

#[test]
fn cosine_equals_dot_after_normalization() {
    let x = random_matrix(30, 4, 8);
    let (_, out) = normalize_ucp(&x).unwrap();
    for i in 0..29 {
        let (u, v) = (out.matrix.row(i), out.matrix.row(i + 1));
        assert!((cosine(u, v).unwrap() - dot(u, v)).abs() <= 1e-10);
    }
}

#[test]
fn ucp_hand_computed_pipeline() {
    // columns: (1, 3, 5, 7) and (2, 2, 4, 4)
    let x = Matrix::from_rows(&[[1.0, 2.0], [3.0, 2.0], [5.0, 4.0], [7.0, 4.0]]).unwrap();
    let (stats, out) = normalize_ucp(&x).unwrap();
    assert_eq!(stats.fitted_on, SplitTag::Full);
    assert_eq!(stats.mean, vec![4.0, 3.0]);
    // population std: sqrt(5) and 1
    assert!((stats.std[0] - 5f64.sqrt()).abs() < 1e-15);
    assert_eq!(stats.std[1], 1.0);
    let s5 = 5f64.sqrt();
    let expected_standardized = [
        [-3.0 / s5, -1.0],
        [-1.0 / s5, -1.0],
        [1.0 / s5, 1.0],
        [3.0 / s5, 1.0],
    ];
    for (i, e) in expected_standardized.iter().enumerate() {
        let n = (e[0] * e[0] + e[1] * e[1]).sqrt();
        assert!((out.matrix.get(i, 0) - e[0] / n).abs() < 1e-15);
        assert!((out.matrix.get(i, 1) - e[1] / n).abs() < 1e-15);
    }
    // first row by hand: (-3/√5, -1) has norm √(14/5)
    assert!((out.matrix.get(0, 0) + 3.0 / 14f64.sqrt()).abs() < 1e-15);
    // the column step alone leaves every column centered
    let z = standardize(&stats, &x).unwrap();
    let (means, _) = oracle_stats(&z);
    assert!(means.iter().all(|m| m.abs() < 1e-15));
}

#[test]
fn test_fitted_stats_fail_the_train_audit() {
    let test_split = random_matrix(10, 3, 1);
    let stats = fit_znorm(&test_split, SplitTag::Test).unwrap();
    assert!(matches!(
        stats.require_fitted_on(SplitTag::Train),
        Err(Error::FittedOn {
            expected: SplitTag::Train,
            found: SplitTag::Test
        })
    ));
}

#[test]
fn apply_never_reads_fit_data() {
    // stats built from train alone give the same test output no matter what
    // other test rows are transformed alongside
    let train = random_matrix(40, 3, 21);
    let stats = fit_znorm(&train, SplitTag::Train).unwrap();
    let test = random_matrix(5, 3, 22);
    let alone = apply_znorm(&stats, &Matrix::from_rows(&[test.row(0)]).unwrap()).unwrap();
    let together = apply_znorm(&stats, &test).unwrap();
    assert_eq!(alone.matrix.row(0), together.matrix.row(0));
}

#[test]
fn applying_twice_changes_the_matrix() {
    let x = random_matrix(12, 3, 5);
    let (_, once) = normalize_ucp(&x).unwrap();
    let (_, twice) = normalize_ucp(&once.matrix).unwrap();
    let diff: f64 = once
        .matrix
        .as_slice()
        .iter()
        .zip(twice.matrix.as_slice())
        .map(|(a, b)| (a - b).abs())
        .sum();
    assert!(diff > 1e-6);
}

#[test]
fn constant_column_is_recorded_and_left_unscaled() {
    let x = Matrix::from_rows(&[[1.0, 5.0], [2.0, 5.0], [3.0, 5.0]]).unwrap();
    let stats = fit_znorm(&x, SplitTag::Train).unwrap();
    assert_eq!(stats.degenerate, vec![1]);
    let z = standardize(&stats, &x).unwrap();
    assert!(z.iter_rows().all(|r| r[1] == 0.0));
}

proptest! {
    #[test]
    fn znorm_properties(rows in 2usize..30, cols in 1usize..8, seed in 0u64..1000) {
        let x = random_matrix(rows, cols, seed);
        let stats = fit_znorm(&x, SplitTag::Train).unwrap();
        prop_assert!(stats.std.iter().all(|s| *s >= 0.0));
        let z = standardize(&stats, &x).unwrap();
        let (means, stds) = oracle_stats(&z);
        for j in 0..cols {
            prop_assert!(means[j].abs() <= 1e-10);
            if !stats.degenerate.contains(&j) {
                prop_assert!((stds[j] * stds[j] - 1.0).abs() <= 1e-10);
            }
        }
        let out = apply_znorm(&stats, &x).unwrap();
        for (i, r) in out.matrix.iter_rows().enumerate() {
            if !out.zero_rows.contains(&i) {
                prop_assert!((norm(r) - 1.0).abs() <= 1e-12);
            }
        }
    }
}

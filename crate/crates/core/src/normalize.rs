//! Z-normalization of embedding matrices.
//!
//! Normalizing a matrix is two steps: every column is centered and divided
//! by its population standard deviation, then every row is rescaled to unit
//! ℓ2 norm. Statistics carry the split they were fitted on so that callers
//! can prove test data never fed the fit.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{norm, Matrix};

/// Which portion of a dataset a matrix (or a fit) came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitTag {
    Train,
    Dev,
    Test,
    /// The whole evaluated data, used only by the unsupervised protocol.
    Full,
}

impl fmt::Display for SplitTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SplitTag::Train => "train",
            SplitTag::Dev => "dev",
            SplitTag::Test => "test",
            SplitTag::Full => "full",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    /// Population standard deviation per column.
    pub std: Vec<f64>,
    /// Columns with zero standard deviation; they are divided by 1.
    pub degenerate: Vec<usize>,
    pub fitted_on: SplitTag,
}

impl NormStats {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn require_fitted_on(&self, expected: SplitTag) -> Result<()> {
        if self.fitted_on == expected {
            Ok(())
        } else {
            Err(Error::FittedOn {
                expected,
                found: self.fitted_on,
            })
        }
    }

    fn divisor(&self, j: usize) -> f64 {
        if self.std[j] == 0.0 {
            1.0
        } else {
            self.std[j]
        }
    }
}

/// A normalized matrix and the rows that had nothing left after centering.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalized {
    pub matrix: Matrix,
    pub zero_rows: Vec<usize>,
}

pub fn fit_znorm(x: &Matrix, fitted_on: SplitTag) -> Result<NormStats> {
    let n = x.rows();
    if n < 2 {
        return Err(Error::invalid(format!("z-norm fit needs at least 2 rows, got {n}")));
    }
    let d = x.cols();
    let mut mean = vec![0.0; d];
    for r in x.iter_rows() {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut var = vec![0.0; d];
    for r in x.iter_rows() {
        for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    let std: Vec<f64> = var.into_iter().map(|s| (s / n as f64).sqrt()).collect();
    let degenerate = (0..d).filter(|&j| std[j] == 0.0).collect();
    Ok(NormStats {
        mean,
        std,
        degenerate,
        fitted_on,
    })
}

/// Column step only: `(x - mean) / std`, with zero-std columns divided by 1.
pub fn standardize(stats: &NormStats, x: &Matrix) -> Result<Matrix> {
    if x.cols() != stats.dim() {
        return Err(Error::DimensionMismatch {
            expected: stats.dim(),
            found: x.cols(),
        });
    }
    let mut out = x.clone();
    for i in 0..out.rows() {
        for (j, v) in out.row_mut(i).iter_mut().enumerate() {
            *v = (*v - stats.mean[j]) / stats.divisor(j);
        }
    }
    Ok(out)
}

/// Full z-norm: [`standardize`] followed by row ℓ2 normalization.
pub fn apply_znorm(stats: &NormStats, x: &Matrix) -> Result<Normalized> {
    let mut matrix = standardize(stats, x)?;
    let mut zero_rows = Vec::new();
    for i in 0..matrix.rows() {
        // magnitude of the terms whose difference formed the row, for a
        // rounding-aware zero test
        let scale = x
            .row(i)
            .iter()
            .enumerate()
            .map(|(j, v)| {
                let t = (v.abs() + stats.mean[j].abs()) / stats.divisor(j);
                t * t
            })
            .sum::<f64>()
            .sqrt();
        let row = matrix.row_mut(i);
        let n = norm(row);
        if n <= 16.0 * f64::EPSILON * scale || n == 0.0 {
            row.fill(0.0);
            zero_rows.push(i);
        } else {
            for v in row.iter_mut() {
                *v /= n;
            }
        }
    }
    Ok(Normalized { matrix, zero_rows })
}

/// Unsupervised setting: fit and apply on the same stacked matrix of both
/// sentences of every pair.
pub fn normalize_ucp(x_all: &Matrix) -> Result<(NormStats, Normalized)> {
    let stats = fit_znorm(x_all, SplitTag::Full)?;
    let normalized = apply_znorm(&stats, x_all)?;
    Ok((stats, normalized))
}

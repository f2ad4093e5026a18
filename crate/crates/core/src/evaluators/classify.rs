//! Multinomial logistic regression and a one-hidden-layer MLP, both trained
//! with L2-penalized cross-entropy by L-BFGS, plus grid selection of their
//! hyperparameters on a dev split or by inner cross-validation.
//!
//! Biases are not penalized. Training is fully deterministic: logistic
//! regression starts from zero weights and the MLP from a seeded
//! initialization.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::optim::lbfgs;
use crate::corpus::cv_folds;
use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub const DEFAULT_L2_GRID: [f64; 6] = [1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1.0];
pub const DEFAULT_HIDDEN_SIZES: [usize; 3] = [50, 100, 200];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassifierKind {
    #[serde(rename = "logreg")]
    LogisticRegression,
    Mlp,
}

impl ClassifierKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ClassifierKind::LogisticRegression => "logreg",
            ClassifierKind::Mlp => "mlp",
        }
    }
}

impl std::str::FromStr for ClassifierKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "logreg" | "logistic_regression" => Ok(ClassifierKind::LogisticRegression),
            "mlp" => Ok(ClassifierKind::Mlp),
            other => Err(Error::invalid(format!("unknown classifier {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassifierSpec {
    pub kind: ClassifierKind,
    pub l2_grid: Vec<f64>,
    /// Only read for [`ClassifierKind::Mlp`].
    pub hidden_sizes: Vec<usize>,
    pub seed: u64,
    pub max_epochs: usize,
    /// Gradient-norm stopping threshold.
    pub tolerance: f64,
    /// Inner folds used for selection when no dev split exists.
    pub inner_folds: usize,
}

impl ClassifierSpec {
    pub fn new(kind: ClassifierKind) -> Self {
        ClassifierSpec {
            kind,
            l2_grid: DEFAULT_L2_GRID.to_vec(),
            hidden_sizes: DEFAULT_HIDDEN_SIZES.to_vec(),
            seed: 1111,
            max_epochs: 500,
            tolerance: 1e-5,
            inner_folds: 10,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.l2_grid.is_empty() {
            return Err(Error::invalid("empty l2 grid"));
        }
        if self.l2_grid.iter().any(|l| !(*l >= 0.0) || !l.is_finite()) {
            return Err(Error::invalid("l2 penalties must be finite and non-negative"));
        }
        if self.kind == ClassifierKind::Mlp
            && (self.hidden_sizes.is_empty() || self.hidden_sizes.contains(&0))
        {
            return Err(Error::invalid("MLP hidden sizes must be non-empty and positive"));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::invalid("tolerance must be positive"));
        }
        if self.max_epochs == 0 {
            return Err(Error::invalid("max_epochs must be positive"));
        }
        if self.inner_folds < 2 {
            return Err(Error::invalid("inner_folds must be at least 2"));
        }
        Ok(())
    }

    /// Grid points in evaluation order: hidden sizes outer, penalties inner.
    fn grid(&self) -> Vec<Hyper> {
        let hidden: Vec<Option<usize>> = match self.kind {
            ClassifierKind::LogisticRegression => vec![None],
            ClassifierKind::Mlp => self.hidden_sizes.iter().copied().map(Some).collect(),
        };
        hidden
            .into_iter()
            .flat_map(|h| self.l2_grid.iter().map(move |&l2| Hyper { l2, hidden: h }))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Hyper {
    pub l2: f64,
    pub hidden: Option<usize>,
}

impl Hyper {
    pub fn to_map(self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        m.insert("l2".to_string(), format!("{}", self.l2));
        if let Some(h) = self.hidden {
            m.insert("hidden".to_string(), h.to_string());
        }
        m
    }
}

fn log_softmax_grad(z: &mut [f64], label: usize) -> f64 {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let shifted_label = z[label] - max;
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    let loss = sum.ln() - shifted_label;
    for v in z.iter_mut() {
        *v /= sum;
    }
    z[label] -= 1.0;
    loss
}

fn argmax(z: &[f64]) -> usize {
    z.iter()
        .enumerate()
        .fold(0, |best, (i, v)| if *v > z[best] { i } else { best })
}

fn check_training_data(x: &Matrix, y: &[usize], n_classes: usize) -> Result<()> {
    if x.rows() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.rows(),
            found: y.len(),
        });
    }
    if let Some(&bad) = y.iter().find(|&&l| l >= n_classes) {
        return Err(Error::invalid(format!("label {bad} out of range")));
    }
    let mut present = vec![false; n_classes];
    y.iter().for_each(|&l| present[l] = true);
    if present.iter().filter(|p| **p).count() < 2 {
        return Err(Error::invalid("training data needs at least 2 classes"));
    }
    Ok(())
}

/// Multinomial logistic regression; parameters are the `C × D` weight
/// matrix (row-major) followed by `C` biases.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticRegression {
    n_features: usize,
    n_classes: usize,
    params: Vec<f64>,
}

impl LogisticRegression {
    pub fn n_params(n_features: usize, n_classes: usize) -> usize {
        n_classes * (n_features + 1)
    }

    /// Mean cross-entropy plus `l2/2 ‖W‖²` and its gradient.
    pub fn loss_and_gradient(
        params: &[f64],
        x: &Matrix,
        y: &[usize],
        n_classes: usize,
        l2: f64,
    ) -> (f64, Vec<f64>) {
        let d = x.cols();
        let (w, b) = params.split_at(n_classes * d);
        let mut grad = vec![0.0; params.len()];
        let mut loss = 0.0;
        let mut z = vec![0.0; n_classes];
        for (row, &label) in x.iter_rows().zip(y) {
            for c in 0..n_classes {
                z[c] = crate::linalg::dot(&w[c * d..(c + 1) * d], row) + b[c];
            }
            loss += log_softmax_grad(&mut z, label);
            let (gw, gb) = grad.split_at_mut(n_classes * d);
            for c in 0..n_classes {
                crate::linalg::axpy(z[c], row, &mut gw[c * d..(c + 1) * d]);
                gb[c] += z[c];
            }
        }
        let n = x.rows() as f64;
        loss /= n;
        grad.iter_mut().for_each(|g| *g /= n);
        loss += 0.5 * l2 * w.iter().map(|v| v * v).sum::<f64>();
        for (g, wi) in grad.iter_mut().zip(w) {
            *g += l2 * wi;
        }
        (loss, grad)
    }

    pub fn fit(
        x: &Matrix,
        y: &[usize],
        n_classes: usize,
        l2: f64,
        max_epochs: usize,
        tolerance: f64,
    ) -> Result<Trained> {
        check_training_data(x, y, n_classes)?;
        let init = vec![0.0; Self::n_params(x.cols(), n_classes)];
        Ok(Self::fit_from(init, x, y, n_classes, l2, max_epochs, tolerance))
    }

    pub fn fit_from(
        init: Vec<f64>,
        x: &Matrix,
        y: &[usize],
        n_classes: usize,
        l2: f64,
        max_epochs: usize,
        tolerance: f64,
    ) -> Trained {
        let m = lbfgs(
            |p| Self::loss_and_gradient(p, x, y, n_classes, l2),
            init,
            tolerance,
            max_epochs,
        );
        Trained {
            model: Model::LogReg(LogisticRegression {
                n_features: x.cols(),
                n_classes,
                params: m.x,
            }),
            loss: m.value,
            grad_norm: m.grad_norm,
            iterations: m.iterations,
            converged: m.converged,
        }
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn scores(&self, row: &[f64]) -> Vec<f64> {
        let d = self.n_features;
        let (w, b) = self.params.split_at(self.n_classes * d);
        (0..self.n_classes)
            .map(|c| crate::linalg::dot(&w[c * d..(c + 1) * d], row) + b[c])
            .collect()
    }
}

/// One hidden ReLU layer and a softmax output. Parameter layout:
/// `W1 (H × D)`, `b1 (H)`, `W2 (C × H)`, `b2 (C)`, all row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    n_features: usize,
    hidden: usize,
    n_classes: usize,
    params: Vec<f64>,
}

struct MlpShape {
    d: usize,
    h: usize,
    c: usize,
}

impl MlpShape {
    fn split<'a>(&self, p: &'a [f64]) -> (&'a [f64], &'a [f64], &'a [f64], &'a [f64]) {
        let (w1, rest) = p.split_at(self.h * self.d);
        let (b1, rest) = rest.split_at(self.h);
        let (w2, b2) = rest.split_at(self.c * self.h);
        (w1, b1, w2, b2)
    }
}

impl Mlp {
    pub fn n_params(n_features: usize, hidden: usize, n_classes: usize) -> usize {
        hidden * n_features + hidden + n_classes * hidden + n_classes
    }

    /// Uniform Glorot initialization of weights, zero biases.
    pub fn init(n_features: usize, hidden: usize, n_classes: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::with_capacity(Self::n_params(n_features, hidden, n_classes));
        let r1 = (6.0 / (n_features + hidden) as f64).sqrt();
        params.extend((0..hidden * n_features).map(|_| rng.random_range(-r1..r1)));
        params.extend(std::iter::repeat_n(0.0, hidden));
        let r2 = (6.0 / (hidden + n_classes) as f64).sqrt();
        params.extend((0..n_classes * hidden).map(|_| rng.random_range(-r2..r2)));
        params.extend(std::iter::repeat_n(0.0, n_classes));
        params
    }

    /// Mean cross-entropy plus `l2/2 (‖W1‖² + ‖W2‖²)` and its gradient.
    pub fn loss_and_gradient(
        params: &[f64],
        x: &Matrix,
        y: &[usize],
        hidden: usize,
        n_classes: usize,
        l2: f64,
    ) -> (f64, Vec<f64>) {
        let shape = MlpShape {
            d: x.cols(),
            h: hidden,
            c: n_classes,
        };
        let (d, h, c) = (shape.d, shape.h, shape.c);
        let (w1, b1, w2, b2) = shape.split(params);
        let mut grad = vec![0.0; params.len()];
        let mut loss = 0.0;
        let mut act = vec![0.0; h];
        let mut z = vec![0.0; c];
        let mut dh = vec![0.0; h];
        for (row, &label) in x.iter_rows().zip(y) {
            for j in 0..h {
                let a = crate::linalg::dot(&w1[j * d..(j + 1) * d], row) + b1[j];
                act[j] = a.max(0.0);
            }
            for k in 0..c {
                z[k] = crate::linalg::dot(&w2[k * h..(k + 1) * h], &act) + b2[k];
            }
            loss += log_softmax_grad(&mut z, label);

            let (gw1, rest) = grad.split_at_mut(h * d);
            let (gb1, rest) = rest.split_at_mut(h);
            let (gw2, gb2) = rest.split_at_mut(c * h);
            dh.fill(0.0);
            for k in 0..c {
                crate::linalg::axpy(z[k], &act, &mut gw2[k * h..(k + 1) * h]);
                gb2[k] += z[k];
                crate::linalg::axpy(z[k], &w2[k * h..(k + 1) * h], &mut dh);
            }
            for j in 0..h {
                if act[j] > 0.0 {
                    crate::linalg::axpy(dh[j], row, &mut gw1[j * d..(j + 1) * d]);
                    gb1[j] += dh[j];
                }
            }
        }
        let n = x.rows() as f64;
        loss /= n;
        grad.iter_mut().for_each(|g| *g /= n);
        let sq = |w: &[f64]| w.iter().map(|v| v * v).sum::<f64>();
        loss += 0.5 * l2 * (sq(w1) + sq(w2));
        let (gw1, rest) = grad.split_at_mut(h * d);
        for (g, w) in gw1.iter_mut().zip(w1) {
            *g += l2 * w;
        }
        let gw2 = &mut rest[h..h + c * h];
        for (g, w) in gw2.iter_mut().zip(w2) {
            *g += l2 * w;
        }
        (loss, grad)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn fit(
        x: &Matrix,
        y: &[usize],
        n_classes: usize,
        hidden: usize,
        l2: f64,
        seed: u64,
        max_epochs: usize,
        tolerance: f64,
    ) -> Result<Trained> {
        check_training_data(x, y, n_classes)?;
        let init = Self::init(x.cols(), hidden, n_classes, seed);
        Ok(Self::fit_from(init, x, y, n_classes, hidden, l2, max_epochs, tolerance))
    }

    #[allow(clippy::too_many_arguments)]
    pub fn fit_from(
        init: Vec<f64>,
        x: &Matrix,
        y: &[usize],
        n_classes: usize,
        hidden: usize,
        l2: f64,
        max_epochs: usize,
        tolerance: f64,
    ) -> Trained {
        let m = lbfgs(
            |p| Self::loss_and_gradient(p, x, y, hidden, n_classes, l2),
            init,
            tolerance,
            max_epochs,
        );
        Trained {
            model: Model::Mlp(Mlp {
                n_features: x.cols(),
                hidden,
                n_classes,
                params: m.x,
            }),
            loss: m.value,
            grad_norm: m.grad_norm,
            iterations: m.iterations,
            converged: m.converged,
        }
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn scores(&self, row: &[f64]) -> Vec<f64> {
        let shape = MlpShape {
            d: self.n_features,
            h: self.hidden,
            c: self.n_classes,
        };
        let (w1, b1, w2, b2) = shape.split(&self.params);
        let (d, h) = (shape.d, shape.h);
        let act: Vec<f64> = (0..h)
            .map(|j| (crate::linalg::dot(&w1[j * d..(j + 1) * d], row) + b1[j]).max(0.0))
            .collect();
        (0..shape.c)
            .map(|k| crate::linalg::dot(&w2[k * h..(k + 1) * h], &act) + b2[k])
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    LogReg(LogisticRegression),
    Mlp(Mlp),
}

impl Model {
    pub fn scores(&self, row: &[f64]) -> Vec<f64> {
        match self {
            Model::LogReg(m) => m.scores(row),
            Model::Mlp(m) => m.scores(row),
        }
    }

    pub fn predict(&self, row: &[f64]) -> usize {
        argmax(&self.scores(row))
    }

    pub fn accuracy(&self, x: &Matrix, y: &[usize]) -> f64 {
        if y.is_empty() {
            return 0.0;
        }
        let correct = x
            .iter_rows()
            .zip(y)
            .filter(|(r, &l)| self.predict(r) == l)
            .count();
        correct as f64 / y.len() as f64
    }

    pub fn params(&self) -> &[f64] {
        match self {
            Model::LogReg(m) => m.params(),
            Model::Mlp(m) => m.params(),
        }
    }
}

/// A fitted model with its optimizer outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct Trained {
    pub model: Model,
    pub loss: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    /// `false` when `max_epochs` ran out before the gradient tolerance.
    pub converged: bool,
}

/// How grid points are scored.
pub enum Validation<'a> {
    Dev { x: &'a Matrix, y: &'a [usize] },
    InnerCv,
}

/// Best grid point, refit on the full training data.
#[derive(Debug, Clone, PartialEq)]
pub struct Selected {
    pub trained: Trained,
    pub hyper: Hyper,
    pub validation_accuracy: f64,
}

fn fit_one(x: &Matrix, y: &[usize], n_classes: usize, spec: &ClassifierSpec, hyper: Hyper) -> Result<Trained> {
    match (spec.kind, hyper.hidden) {
        (ClassifierKind::LogisticRegression, _) => {
            LogisticRegression::fit(x, y, n_classes, hyper.l2, spec.max_epochs, spec.tolerance)
        }
        (ClassifierKind::Mlp, Some(h)) => Mlp::fit(
            x,
            y,
            n_classes,
            h,
            hyper.l2,
            spec.seed,
            spec.max_epochs,
            spec.tolerance,
        ),
        (ClassifierKind::Mlp, None) => unreachable!("MLP grid points always carry a hidden size"),
    }
}

/// Scores every grid point on `validation` and refits the best on all of
/// `(x, y)`. Ties keep the earlier grid point.
pub fn select_and_train(
    x: &Matrix,
    y: &[usize],
    n_classes: usize,
    spec: &ClassifierSpec,
    validation: Validation<'_>,
) -> Result<Selected> {
    spec.validate()?;
    check_training_data(x, y, n_classes)?;
    let grid = spec.grid();
    let folds = match validation {
        Validation::InnerCv => Some(cv_folds(y.len(), spec.inner_folds.min(y.len()), spec.seed)),
        Validation::Dev { .. } => None,
    };
    let mut best: Option<(Hyper, f64, Option<Trained>)> = None;
    for &hyper in &grid {
        let (score, model) = match (&validation, &folds) {
            (Validation::Dev { x: dx, y: dy }, _) => {
                let trained = fit_one(x, y, n_classes, spec, hyper)?;
                (trained.model.accuracy(dx, dy), Some(trained))
            }
            (Validation::InnerCv, Some(folds)) => {
                let mut total = 0.0;
                let mut counted = 0;
                for (f, held) in folds.iter().enumerate() {
                    let train_idx: Vec<usize> = folds
                        .iter()
                        .enumerate()
                        .filter(|(g, _)| *g != f)
                        .flat_map(|(_, idx)| idx.iter().copied())
                        .collect();
                    let ty: Vec<usize> = train_idx.iter().map(|&i| y[i]).collect();
                    let trained = match fit_one(&x.select_rows(&train_idx), &ty, n_classes, spec, hyper) {
                        Ok(t) => t,
                        // a fold whose training part lost a class cannot be scored
                        Err(Error::Invalid(_)) => continue,
                        Err(e) => return Err(e),
                    };
                    let hy: Vec<usize> = held.iter().map(|&i| y[i]).collect();
                    total += trained.model.accuracy(&x.select_rows(held), &hy);
                    counted += 1;
                }
                if counted == 0 {
                    return Err(Error::invalid("no inner fold kept two classes"));
                }
                (total / counted as f64, None)
            }
            (Validation::InnerCv, None) => unreachable!(),
        };
        if best.as_ref().is_none_or(|(_, s, _)| score > *s) {
            best = Some((hyper, score, model));
        }
    }
    let (hyper, validation_accuracy, model) = best.expect("grid is non-empty");
    let trained = match model {
        Some(t) => t,
        None => fit_one(x, y, n_classes, spec, hyper)?,
    };
    Ok(Selected {
        trained,
        hyper,
        validation_accuracy,
    })
}

/// Logistic regression with hyperparameters chosen on `validation`.
pub fn train_logreg(
    x: &Matrix,
    y: &[usize],
    n_classes: usize,
    spec: &ClassifierSpec,
    validation: Validation<'_>,
) -> Result<Selected> {
    if spec.kind != ClassifierKind::LogisticRegression {
        return Err(Error::invalid("train_logreg needs a logistic-regression spec"));
    }
    select_and_train(x, y, n_classes, spec, validation)
}

/// MLP with hidden size and penalty chosen on `validation`.
pub fn train_mlp(
    x: &Matrix,
    y: &[usize],
    n_classes: usize,
    spec: &ClassifierSpec,
    validation: Validation<'_>,
) -> Result<Selected> {
    if spec.kind != ClassifierKind::Mlp {
        return Err(Error::invalid("train_mlp needs an MLP spec"));
    }
    select_and_train(x, y, n_classes, spec, validation)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_validation() {
        let mut s = ClassifierSpec::new(ClassifierKind::Mlp);
        assert!(s.validate().is_ok());
        s.l2_grid.clear();
        assert!(s.validate().is_err());
        let mut s = ClassifierSpec::new(ClassifierKind::LogisticRegression);
        s.tolerance = 0.0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn grid_order() {
        let mut s = ClassifierSpec::new(ClassifierKind::Mlp);
        s.hidden_sizes = vec![2, 3];
        s.l2_grid = vec![0.1, 1.0];
        let g: Vec<_> = s.grid().iter().map(|h| (h.hidden, h.l2)).collect();
        assert_eq!(g, vec![(Some(2), 0.1), (Some(2), 1.0), (Some(3), 0.1), (Some(3), 1.0)]);
    }

    #[test]
    fn single_class_rejected() {
        let x = Matrix::from_rows(&[[1.0], [2.0]]).unwrap();
        assert!(LogisticRegression::fit(&x, &[0, 0], 2, 0.1, 10, 1e-5).is_err());
    }

    #[test]
    fn argmax_ties_take_first() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
    }
}

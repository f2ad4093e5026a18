//! Deterministic limited-memory BFGS with Armijo backtracking.

use crate::linalg::{axpy, dot, norm};

const MEMORY: usize = 10;
const ARMIJO_C: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 60;

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Minimizes `f` (returning value and gradient) from `x0` until the
/// gradient's ℓ2 norm is at most `tolerance` or `max_iterations` steps have
/// been taken.
pub fn lbfgs<F>(mut f: F, x0: Vec<f64>, tolerance: f64, max_iterations: usize) -> Minimum
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let mut x = x0;
    let (mut value, mut grad) = f(&x);
    let mut history: Vec<(Vec<f64>, Vec<f64>, f64)> = Vec::with_capacity(MEMORY);
    let mut iterations = 0;

    while iterations < max_iterations {
        let gnorm = norm(&grad);
        if gnorm <= tolerance {
            return Minimum {
                x,
                value,
                grad_norm: gnorm,
                iterations,
                converged: true,
            };
        }

        let mut dir = two_loop(&grad, &history);
        let mut slope = dot(&dir, &grad);
        if !(slope < 0.0) {
            // not a descent direction: restart from steepest descent
            history.clear();
            dir = grad.iter().map(|g| -g).collect();
            slope = -gnorm * gnorm;
        }

        let mut step = if history.is_empty() {
            (1.0 / gnorm).min(1.0)
        } else {
            1.0
        };
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let mut trial = x.clone();
            axpy(step, &dir, &mut trial);
            let (tv, tg) = f(&trial);
            if tv.is_finite() && tv <= value + ARMIJO_C * step * slope {
                accepted = Some((trial, tv, tg));
                break;
            }
            step *= 0.5;
        }
        iterations += 1;
        let Some((next, next_value, next_grad)) = accepted else {
            // line search exhausted; no further progress is possible
            break;
        };

        let s: Vec<f64> = next.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = next_grad.iter().zip(&grad).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * norm(&s) * norm(&y) {
            if history.len() == MEMORY {
                history.remove(0);
            }
            history.push((s, y, 1.0 / sy));
        }
        x = next;
        value = next_value;
        grad = next_grad;
    }

    let grad_norm = norm(&grad);
    Minimum {
        x,
        value,
        grad_norm,
        iterations,
        converged: grad_norm <= tolerance,
    }
}

fn two_loop(grad: &[f64], history: &[(Vec<f64>, Vec<f64>, f64)]) -> Vec<f64> {
    let mut q: Vec<f64> = grad.iter().map(|g| -g).collect();
    let mut alphas = Vec::with_capacity(history.len());
    for (s, y, rho) in history.iter().rev() {
        let a = rho * dot(s, &q);
        axpy(-a, y, &mut q);
        alphas.push(a);
    }
    if let Some((s, y, _)) = history.last() {
        let gamma = dot(s, y) / dot(y, y);
        q.iter_mut().for_each(|v| *v *= gamma);
    }
    for ((s, y, rho), a) in history.iter().zip(alphas.into_iter().rev()) {
        let b = rho * dot(y, &q);
        axpy(a - b, s, &mut q);
    }
    q
}

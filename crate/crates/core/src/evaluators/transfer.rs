//! Sentence classification tasks.

use std::collections::BTreeMap;

use crate::compose::{Diagnostics, Encoder};
use crate::corpus::{cv_folds, LabeledDataset, Sentence, SplitPolicy};
use crate::error::Result;
use crate::linalg::Matrix;
use crate::normalize::{apply_znorm, fit_znorm, SplitTag};

use super::classify::{select_and_train, ClassifierSpec, Selected, Validation};
use super::{EvalResult, Protocol};

struct Fold<'a> {
    train: &'a [usize],
    dev: Option<&'a [usize]>,
    test: &'a [usize],
}

struct FoldOutcome {
    selected: Selected,
    accuracy: f64,
}

/// Trains on one split and scores on its test part. Normalization stats
/// (and SIF components) are fitted on the training rows only.
fn run_fold(
    fold: &Fold<'_>,
    embeddings: &Matrix,
    labels: &[usize],
    n_classes: usize,
    spec: &ClassifierSpec,
    normalized: bool,
) -> Result<FoldOutcome> {
    let pick = |idx: &[usize]| -> (Matrix, Vec<usize>) {
        (embeddings.select_rows(idx), idx.iter().map(|&i| labels[i]).collect())
    };
    let (mut train_x, train_y) = pick(fold.train);
    let (mut test_x, test_y) = pick(fold.test);
    let mut dev = fold.dev.map(pick);
    if normalized {
        let stats = fit_znorm(&train_x, SplitTag::Train)?;
        stats.require_fitted_on(SplitTag::Train)?;
        train_x = apply_znorm(&stats, &train_x)?.matrix;
        test_x = apply_znorm(&stats, &test_x)?.matrix;
        if let Some((dx, _)) = dev.as_mut() {
            *dx = apply_znorm(&stats, dx)?.matrix;
        }
    }
    let validation = match &dev {
        Some((x, y)) => Validation::Dev { x, y },
        None => Validation::InnerCv,
    };
    let selected = select_and_train(&train_x, &train_y, n_classes, spec, validation)?;
    let accuracy = selected.trained.model.accuracy(&test_x, &test_y);
    Ok(FoldOutcome { selected, accuracy })
}

fn embed(
    encoder: &Encoder,
    sentences: &[&Sentence],
    fit_on: Option<&[usize]>,
    diag: &mut Diagnostics,
) -> Result<Matrix> {
    let items: Vec<(usize, &Sentence)> = sentences.iter().copied().enumerate().collect();
    match fit_on {
        Some(idx) if encoder.needs_fit() => {
            let mut fitted = encoder.clone();
            let train: Vec<(usize, &Sentence)> = idx.iter().map(|&i| items[i]).collect();
            fitted.fit(&train)?;
            fitted.encode_all(&items, diag)
        }
        _ => encoder.encode_all(&items, diag),
    }
}

/// Evaluates a classifier on embeddings of a labeled dataset.
///
/// Fixed splits report test accuracy, with hyperparameters selected on the
/// dev split when there is one and by inner cross-validation otherwise.
/// Cross-validated datasets report the mean test accuracy over the outer
/// folds; per-fold choices are recorded joined by `/`.
pub fn run_transfer_task(
    task: &str,
    dataset: &LabeledDataset,
    encoder_name: &str,
    encoder: &Encoder,
    spec: &ClassifierSpec,
    normalized: bool,
) -> Result<EvalResult> {
    spec.validate()?;
    let sentences = dataset.sentences();
    let labels = dataset.labels();
    let mut diagnostics = Diagnostics::default();
    let mut metrics = BTreeMap::new();
    let hyperparams;
    let converged;

    match &dataset.split_policy {
        SplitPolicy::Fixed { train, dev, test } => {
            let emb = embed(encoder, &sentences, Some(train), &mut diagnostics)?;
            let fold = Fold {
                train,
                dev: dev.as_deref(),
                test,
            };
            let out = run_fold(&fold, &emb, &labels, dataset.n_classes, spec, normalized)?;
            metrics.insert("accuracy".to_string(), out.accuracy);
            metrics.insert(
                "validation_accuracy".to_string(),
                out.selected.validation_accuracy,
            );
            hyperparams = out.selected.hyper.to_map();
            converged = out.selected.trained.converged;
        }
        SplitPolicy::CrossValidation { k, seed } => {
            let folds = cv_folds(dataset.len(), *k, *seed);
            let shared = if encoder.needs_fit() {
                None
            } else {
                Some(embed(encoder, &sentences, None, &mut diagnostics)?)
            };
            let mut accuracies = Vec::with_capacity(*k);
            let mut chosen: BTreeMap<String, Vec<String>> = BTreeMap::new();
            let mut all_converged = true;
            for (f, test) in folds.iter().enumerate() {
                let train: Vec<usize> = folds
                    .iter()
                    .enumerate()
                    .filter(|(g, _)| *g != f)
                    .flat_map(|(_, idx)| idx.iter().copied())
                    .collect();
                let per_fold;
                let emb = match &shared {
                    Some(m) => m,
                    None => {
                        per_fold = embed(encoder, &sentences, Some(&train), &mut diagnostics)?;
                        &per_fold
                    }
                };
                let fold = Fold {
                    train: &train,
                    dev: None,
                    test,
                };
                let out = run_fold(&fold, emb, &labels, dataset.n_classes, spec, normalized)?;
                accuracies.push(out.accuracy);
                all_converged &= out.selected.trained.converged;
                for (key, value) in out.selected.hyper.to_map() {
                    chosen.entry(key).or_default().push(value);
                }
            }
            let n = accuracies.len() as f64;
            let mean = accuracies.iter().sum::<f64>() / n;
            let var = accuracies.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
            metrics.insert("accuracy".to_string(), mean);
            metrics.insert("accuracy_std".to_string(), var.sqrt());
            hyperparams = chosen.into_iter().map(|(k, v)| (k, v.join("/"))).collect();
            converged = all_converged;
        }
    }

    Ok(EvalResult {
        task: task.to_string(),
        encoder: encoder_name.to_string(),
        embedding_size: encoder.output_dim(),
        protocol: Protocol::Classify,
        classifier: spec.kind.as_str().to_string(),
        normalized,
        metrics,
        hyperparams,
        converged,
        diagnostics,
    })
}

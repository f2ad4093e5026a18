//! Evaluation protocols.
//!
//! * [`similarity::eval_ucp`]: unsupervised cosine similarity correlated
//!   with gold scores.
//! * [`similarity::train_similarity_regressor`] and
//!   [`similarity::eval_learned_similarity`]: ridge regression over pair
//!   features, reported with MSE alongside correlations.
//! * [`transfer::run_transfer_task`]: sentence classification with logistic
//!   regression or an MLP.
//!
//! Every protocol records the embedding size and the normalization flag in
//! its [`EvalResult`].

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

use crate::compose::Diagnostics;

pub mod classify;
pub mod optim;
pub mod similarity;
pub mod transfer;

pub use classify::{
    select_and_train, DEFAULT_HIDDEN_SIZES, DEFAULT_L2_GRID, train_logreg, train_mlp, ClassifierKind, ClassifierSpec, Hyper,
    LogisticRegression, Mlp, Model, Selected, Trained, Validation,
};
pub use similarity::{
    build_pair_features, eval_learned_similarity, eval_ucp, train_similarity_regressor,
    LearnedSimResult, Ridge, SimilarityModel, UcpResult, GOLD_MAX,
};
pub use transfer::run_transfer_task;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    Ucp,
    LearnedSim,
    Classify,
}

impl Protocol {
    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::Ucp => "ucp",
            Protocol::LearnedSim => "learned_sim",
            Protocol::Classify => "classify",
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Protocol {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "ucp" => Ok(Protocol::Ucp),
            "learned_sim" => Ok(Protocol::LearnedSim),
            "classify" => Ok(Protocol::Classify),
            other => Err(crate::Error::invalid(format!("unknown protocol {other:?}"))),
        }
    }
}

/// One evaluated (task, encoder, protocol, classifier, normalization) cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalResult {
    pub task: String,
    pub encoder: String,
    pub embedding_size: usize,
    pub protocol: Protocol,
    /// `cosine`, `ridge`, `logreg` or `mlp`.
    pub classifier: String,
    pub normalized: bool,
    pub metrics: BTreeMap<String, f64>,
    pub hyperparams: BTreeMap<String, String>,
    /// `false` if any optimizer hit its iteration limit.
    pub converged: bool,
    pub diagnostics: Diagnostics,
}

impl EvalResult {
    pub fn from_ucp(task: &str, encoder: &str, embedding_size: usize, r: &UcpResult) -> Self {
        let metrics = BTreeMap::from([
            ("pearson".to_string(), r.pearson),
            ("spearman".to_string(), r.spearman),
            ("n_pairs".to_string(), r.n_pairs as f64),
            ("skipped_pairs".to_string(), r.skipped_pairs as f64),
        ]);
        EvalResult {
            task: task.to_string(),
            encoder: encoder.to_string(),
            embedding_size,
            protocol: Protocol::Ucp,
            classifier: "cosine".to_string(),
            normalized: r.normalized,
            metrics,
            hyperparams: BTreeMap::new(),
            converged: true,
            diagnostics: r.diagnostics,
        }
    }

    pub fn from_learned(
        task: &str,
        encoder: &str,
        model: &SimilarityModel,
        r: &LearnedSimResult,
    ) -> Self {
        let mut metrics = BTreeMap::from([
            ("mse".to_string(), r.mse),
            ("dev_pearson".to_string(), model.dev_pearson),
            ("n_pairs".to_string(), r.n_pairs as f64),
        ]);
        if let Some(p) = r.pearson {
            metrics.insert("pearson".to_string(), p);
        }
        if let Some(s) = r.spearman {
            metrics.insert("spearman".to_string(), s);
        }
        let mut diagnostics = model.diagnostics;
        diagnostics.merge(&r.diagnostics);
        EvalResult {
            task: task.to_string(),
            encoder: encoder.to_string(),
            embedding_size: model.encoder.output_dim(),
            protocol: Protocol::LearnedSim,
            classifier: "ridge".to_string(),
            normalized: model.normalized(),
            metrics,
            hyperparams: BTreeMap::from([("l2".to_string(), format!("{}", model.ridge.l2))]),
            converged: true,
            diagnostics,
        }
    }

    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics.get(name).copied()
    }

    /// The metric used as this cell's headline score.
    pub fn primary_metric(&self) -> &'static str {
        match self.protocol {
            Protocol::Classify => "accuracy",
            Protocol::Ucp | Protocol::LearnedSim => "pearson",
        }
    }

    /// `k1=v1;k2=v2` in key order.
    pub fn hyperparams_string(&self) -> String {
        self.hyperparams
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(";")
    }
}

//! Fair evaluation of sentence embeddings.
//!
//! The crate covers the whole evaluation path: dataset ingestion
//! ([`corpus`]), word-vector storage ([`wordvec`]), sentence encoders with
//! explicit control over output size ([`compose`]), z-normalization with
//! train/test separation ([`normalize`]), the statistics used to score
//! encoders ([`metrics`]), the evaluation protocols themselves
//! ([`evaluators`]) and meta-analysis over score tables ([`analysis`]).
//!
//! Every evaluation result records the embedding size and whether the
//! embeddings were normalized, so that encoders are only ever compared at
//! matching sizes and under both normalization settings.

pub mod analysis;
pub mod compose;
pub mod corpus;
pub mod error;
pub mod evaluators;
pub mod linalg;
pub mod metrics;
pub mod normalize;
pub mod wordvec;

pub use error::{Error, Result};
pub use linalg::Matrix;

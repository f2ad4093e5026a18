use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Load {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: {message}")]
    File { path: PathBuf, message: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A correlation was requested for a series with zero variance.
    #[error("degenerate correlation: {0}")]
    DegenerateCorrelation(String),

    #[error("undefined cosine: zero vector")]
    UndefinedCosine,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("degenerate PC: {0}")]
    DegeneratePc(String),

    #[error("no precomputed vector for sentence id {0}")]
    MissingId(usize),

    /// Normalization statistics were fitted on a split other than the one
    /// the caller requires.
    #[error("normalization stats fitted on {found}, expected {expected}")]
    FittedOn {
        expected: crate::normalize::SplitTag,
        found: crate::normalize::SplitTag,
    },

    #[error("all ridge penalties produced singular normal equations")]
    Singular,

    #[error("missing counterpart for encoder {0}")]
    MissingCounterpart(String),

    #[error("invalid input: {0}")]
    Invalid(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

use std::path::PathBuf;

use thiserror::Error;

/// Every fallible operation in the crate reports through this type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("length mismatch in {op}: expected {expected}, got {actual}")]
    LengthMismatch {
        op: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("input `{0}` is not bound")]
    UnboundInput(String),

    #[error("evaluation context belongs to a different graph")]
    ContextMismatch,

    #[error("graph has no {0} node")]
    MissingNode(&'static str),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("empty batch")]
    EmptyBatch,

    #[error("unknown {kind} `{name}` (allowed: {allowed})")]
    UnknownName {
        kind: &'static str,
        name: String,
        allowed: String,
    },

    #[error("idx parse error: {0}")]
    Idx(String),

    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("config is missing required key `{0}`")]
    MissingKey(String),

    #[error("missing data file {path}: {hint}")]
    DataMissing { path: PathBuf, hint: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, left: &[usize], right: &[usize]) -> Self {
        Error::ShapeMismatch {
            op,
            left: left.to_vec(),
            right: right.to_vec(),
        }
    }

    pub(crate) fn length(op: &'static str, expected: usize, actual: usize) -> Self {
        Error::LengthMismatch {
            op,
            expected,
            actual,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// True for failures caused by arithmetic blowing up rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::NonFinite(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

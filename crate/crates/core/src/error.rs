use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("decode error at byte {offset}: {reason}")]
    Decode { offset: usize, reason: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: String, found: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("dataset is empty after filtering")]
    EmptyDataset,

    #[error("class {class:?} has {have} samples, needs at least {need}")]
    ClassTooSmall { class: String, have: usize, need: usize },

    #[error("masked region has no unmasked boundary pixels")]
    NoBoundary,

    #[error(
        "learning-rate sweep diverged at the first step; retry with a smaller start_lr than {start_lr:e}"
    )]
    DivergentSweep { start_lr: f64 },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("all {failed} files in batch failed; first error: {first}")]
    BatchFailed { failed: usize, first: String },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn dims(expected: impl ToString, found: impl ToString) -> Self {
        Error::DimensionMismatch {
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }
}

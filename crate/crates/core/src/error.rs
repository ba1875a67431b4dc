use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid bounds: {0}")]
    InvalidBounds(String),

    #[error("invalid count: {0}")]
    InvalidCount(String),

    #[error("chord set is empty")]
    EmptyChordSet,

    #[error("invalid chord: {0}")]
    InvalidChord(String),

    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: String, actual: String },

    #[error("degenerate sample {index}: normalizer is zero")]
    DegenerateSample { index: usize },

    #[error("invalid split ratios: {0}")]
    InvalidRatios(String),

    #[error("invalid phantom rule: {0}")]
    InvalidRule(String),

    #[error("invalid model spec: {0}")]
    InvalidSpec(String),

    #[error("spatial underflow: {0}")]
    SpatialUnderflow(String),

    #[error("model uses physical information but none was supplied")]
    MissingPi,

    #[error("checkpoint spec mismatch: {0}")]
    SpecMismatch(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("format error in {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(expected: impl ToString, actual: impl ToString) -> Self {
        Error::ShapeMismatch {
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }
}

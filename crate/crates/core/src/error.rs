//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by geometry construction, feature extraction, training,
/// quantization and file I/O.
#[derive(Debug, Error)]
pub enum Error {
    /// A precondition on an argument was violated.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// An operation that needs at least one nonzero pixel got an all-zero image.
    #[error("empty image: all pixels are zero")]
    EmptyImage,

    /// Two containers that must agree in length do not.
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    /// Training data contains only one class.
    #[error("training data must contain both classes")]
    SingleClass,

    /// A table's value range does not fit the fixed-point format chosen for it.
    #[error("table `{table}` does not fit {format}: max |value| = {max_abs}")]
    ExportRange {
        table: &'static str,
        format: String,
        max_abs: f64,
    },

    /// A file failed structural validation (bad magic, version, field, ...).
    #[error("malformed {what}: {detail}")]
    Format { what: &'static str, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn format(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Format {
            what,
            detail: detail.into(),
        }
    }
}

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("schema violation at row {row}, feature `{feature}`: value {value} is not 0 or 1")]
    SchemaViolation { row: usize, feature: String, value: f64 },

    #[error("no data rows")]
    NoDataRows,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("conflicting labels for duplicate point at index {0}")]
    ConflictingDuplicate(usize),

    #[error("fidelity undefined for empty aggregate")]
    EmptyAggregate,

    #[error("instance too large for brute force: {0}")]
    TooLarge(String),

    #[error("malformed model file at line {line}: {message}")]
    ModelFormat { line: usize, message: String },

    #[error("malformed LP file at line {line}: {message}")]
    LpFormat { line: usize, message: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("missing input files: {}", .0.join(", "))]
    MissingInputs(Vec<String>),

    #[error("solution failed verification: {0}")]
    Verification(String),

    #[error("serialization error: {0}")]
    Serde(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid network: {0}")]
    Validation(String),

    #[error("invalid partition: {0}")]
    Partition(String),

    #[error("layout mismatch: expected {expected} entries, got {got}")]
    Layout { expected: usize, got: usize },

    #[error("index {index} out of range (size {len})")]
    OutOfRange { index: usize, len: usize },

    #[error("branch ({from}, {to}) not found")]
    BranchNotFound { from: usize, to: usize },

    #[error("non-finite {what} at point {point:?}")]
    NonFinite { what: &'static str, point: Vec<f64> },

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

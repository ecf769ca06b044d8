use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("invalid time window: start {start} must be below end {end}")]
    InvalidWindow { start: f64, end: f64 },

    #[error("unknown customer id {0}")]
    UnknownCustomer(usize),

    #[error("objectives undefined: {0}")]
    UndefinedObjective(String),

    #[error("invalid weights ({0}, {1}): weights must be non-negative and sum to 1")]
    InvalidWeights(f64, f64),

    #[error("action {action} is masked in the current state")]
    MaskedAction { action: usize },

    #[error("every vertex is masked")]
    AllMasked,

    #[error("bound estimation failed: {0}")]
    Bounds(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite gradient in parameter `{0}`")]
    NonFiniteGradient(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("batch norm needs at least two rows in train mode, got {0}")]
    BatchTooSmall(usize),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("schema error in column `{column}`: {message}")]
    Schema { column: String, message: String },

    #[error("invalid checkpoint: {0}")]
    Checkpoint(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected} features, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value {value} at row {row}, column {column}")]
    NonFinite { row: usize, column: String, value: f64 },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("{path}: row {row}, column '{column}': {message}")]
    CsvCell { path: PathBuf, row: usize, column: String, message: String },

    #[error("{path}: {message}")]
    CsvFormat { path: PathBuf, message: String },

    #[error("enumeration of {count} cases exceeds the cap of {cap}")]
    CapExceeded { count: u128, cap: u128 },

    #[error("variance estimation requires B >= 2 trees, got {0}")]
    TooFewTrees(usize),

    #[error("insufficient replicates: need at least {needed}, got {got}")]
    TooFewReplicates { needed: usize, got: usize },

    #[error("model file version '{found}' is not supported (expected '{expected}')")]
    ModelVersion { found: String, expected: String },

    #[error("operation requires an honest tree")]
    NotHonest,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("config: {0}")]
    Config(String),
}

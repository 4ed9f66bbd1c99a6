use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("row {row} has {got} columns, expected {expected}")]
    RaggedRow { row: usize, expected: usize, got: usize },

    #[error("label column {0} not found")]
    MissingLabelColumn(String),

    #[error("non-numeric feature at row {row}, column {column}: {value:?}")]
    NonNumeric { row: usize, column: usize, value: String },

    #[error("non-finite feature value at row {row}, column {column}")]
    NonFinite { row: usize, column: usize },

    #[error("label {label} out of range for {class_count} classes")]
    LabelOutOfRange { label: usize, class_count: usize },

    #[error("expected {expected} features, got {got}")]
    ArityMismatch { expected: usize, got: usize },

    #[error("input contains a non-finite value")]
    NonFiniteInput,

    #[error("cannot split {n} rows with train fraction {fraction}: one side would be empty")]
    DegenerateSplit { n: usize, fraction: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid class distribution: {0}")]
    InvalidDistribution(String),

    #[error("empty ensemble")]
    EmptyEnsemble,

    #[error("class count mismatch: expected {expected}, got {got}")]
    ClassCountMismatch { expected: usize, got: usize },

    #[error("unsupported task: {0}")]
    UnsupportedTask(String),

    #[error("unsupported model format version {0}")]
    UnsupportedFormatVersion(u32),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

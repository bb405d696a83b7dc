use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at byte {offset}: {reason}")]
    Parse { offset: usize, reason: String },

    #[error("unsupported NIfTI datatype code {0}")]
    UnsupportedDatatype(i16),

    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("duplicate run {subject_id}/{run_id}")]
    DuplicateRun { subject_id: String, run_id: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("invalid value at row {row}, column {column}: {reason}")]
    Value {
        row: usize,
        column: String,
        reason: String,
    },

    #[error("region is empty")]
    EmptyRegion,

    #[error("need at least 2 usable slices, found {0}")]
    InsufficientSlices(usize),

    #[error("all features were removed: {0}")]
    DegenerateFeatures(String),

    #[error("degenerate labels: {0}")]
    DegenerateLabels(String),

    #[error("need at least {needed} distinct groups, found {found}")]
    InsufficientGroups { needed: usize, found: usize },

    #[error("metric needs both classes in y_true")]
    SingleClass,

    #[error("evaluation failed: {0}")]
    Evaluation(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("bundle format version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(offset: usize, reason: impl Into<String>) -> Self {
        Error::Parse {
            offset,
            reason: reason.into(),
        }
    }
}

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse classification used by front ends to choose an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad configuration or arguments supplied by the caller.
    Config,
    /// Input data or file problems.
    Data,
    /// A broken internal invariant.
    Internal,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("length {0} is not a power of two")]
    NotPowerOfTwo(usize),

    #[error("backward requested for node {node} but the tape only recorded {recorded} nodes")]
    BackwardBeforeForward { node: usize, recorded: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: file is empty or has no data rows")]
    EmptyFile { path: PathBuf },

    #[error("{path}: missing column `{column}`")]
    MissingColumn { path: PathBuf, column: String },

    #[error("{path}: row {row}, column `{column}`: cannot parse {value:?}")]
    Parse {
        path: PathBuf,
        row: usize,
        column: String,
        value: String,
    },

    #[error("{path}: duplicate timestamp {timestamp:?}")]
    DuplicateTimestamp { path: PathBuf, timestamp: String },

    #[error("gap in column `{column}` at row {row}: {reason}")]
    Gap {
        column: String,
        row: usize,
        reason: &'static str,
    },

    #[error("channel `{0}` has zero variance")]
    ZeroVariance(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("checkpoint integrity check failed: {0}")]
    Integrity(String),

    #[error("unsupported checkpoint version {found} (this build reads version {expected})")]
    Version { found: u32, expected: u32 },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) => ErrorKind::Config,
            Error::Shape(_)
            | Error::NonFinite(_)
            | Error::NotPowerOfTwo(_)
            | Error::BackwardBeforeForward { .. } => ErrorKind::Internal,
            _ => ErrorKind::Data,
        }
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}

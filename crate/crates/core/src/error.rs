use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the detection pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("singular bandwidth: {0}")]
    SingularBandwidth(String),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("degenerate duplicates: zero mean reachability distance at indices {indices:?}")]
    DegenerateDuplicates { indices: Vec<usize> },

    #[error("unknown detector `{0}` (expected one of pkde, mahalanobis, knn-dist, lof)")]
    UnknownDetector(String),

    #[error("parse error at row {row}: {msg}")]
    Parse { row: usize, msg: String },

    #[error("label error: {0}")]
    Label(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Coarse classification used for exit codes and FFI status values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Data,
    Numerical,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::NumericalFailure(_) | Error::SingularBandwidth(_) => ErrorClass::Numerical,
            Error::UnknownDetector(_) => ErrorClass::Usage,
            _ => ErrorClass::Data,
        }
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}

pub type Result<T> = std::result::Result<T, Error>;

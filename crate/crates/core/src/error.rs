use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("empty set")]
    EmptySet,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A hypothesis of a construction does not hold for the given input.
    #[error("precondition rejected: {0}")]
    Precondition(String),

    /// A functional oracle broke monotonicity or boundedness during a build.
    #[error("oracle violation: {0}")]
    Oracle(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}

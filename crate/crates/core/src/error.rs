use thiserror::Error;

/// Failures reported by the core routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A scalar or list argument is outside its admissible range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    /// A matrix or vector argument violates a structural invariant
    /// (Hermitian, PSD, sorted, dimension mismatch).
    #[error("invalid input: {0}")]
    InvalidInput(String),
    /// Malformed text matrix.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid_param(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}

pub(crate) fn invalid_input(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}

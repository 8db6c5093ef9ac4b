//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Shapes of two operands do not line up.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// An input violates a documented precondition (non-finite values,
    /// out-of-range scalars, bad mask values, ...).
    #[error("invalid input: {0}")]
    Validation(String),

    /// A numerical operation cannot proceed (singular matrix, zero scale).
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// A file or byte stream does not match its documented format.
    #[error("format error: {0}")]
    Format(String),

    /// Configuration file problems; lists the offending keys by name.
    #[error("invalid config: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn dimension(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    pub fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }
}

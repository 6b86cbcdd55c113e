//! Error type shared across the crate.
//!
//! Every fallible operation returns [`Result`]. Validation failures
//! (mismatched shapes, out-of-range hyperparameters, malformed inputs) are
//! reported as errors rather than panics so callers can surface them with
//! context; panics are reserved for internal indexing bugs.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An input value or shape violated a documented precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// An operation was called in a state that does not admit it
    /// (e.g. retrieving from an uninitialised memory pool).
    #[error("invalid state: {0}")]
    InvalidState(String),

    /// An analytic gradient was requested at a point where the loss is not
    /// differentiable (e.g. on an L1 kink).
    #[error("non-differentiable point: {0}")]
    NonDifferentiable(String),

    /// A text input failed to parse; `line` is 1-based.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Shorthand for [`Error::InvalidArgument`].
    pub fn arg(message: impl Into<String>) -> Self {
        Error::InvalidArgument(message.into())
    }

    /// Shorthand for [`Error::InvalidState`].
    pub fn state(message: impl Into<String>) -> Self {
        Error::InvalidState(message.into())
    }

    /// Shorthand for [`Error::Parse`].
    pub fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }
}

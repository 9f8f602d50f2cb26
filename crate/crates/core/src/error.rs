use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised by the annotation framework.
#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value or input shape is unusable.
    #[error("configuration error: {0}")]
    Config(String),

    /// Input data failed validation (labels out of range, probabilities off the simplex, ...).
    #[error("validation error: {0}")]
    Validation(String),

    /// A pool operation was asked to move a sample that is not where the caller believed.
    /// This always indicates a sequencing bug in the caller.
    #[error("invariant violation: {0}")]
    InvariantViolation(String),

    /// Training diverged or could not start.
    #[error("training error at step {step}: {message}")]
    Training { step: usize, message: String },

    /// Binary or text input could not be decoded.
    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    /// The expert did not answer a parked query.
    #[error("expert unavailable: {0}")]
    Expert(String),

    /// An answer did not match the pending task.
    #[error("conflict: {0}")]
    Conflict(String),

    /// Wraps a failure with the iteration and repeat that produced it.
    #[error("repeat {repeat}, iteration {iteration}: {source}")]
    Run {
        repeat: usize,
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn invariant(msg: impl Into<String>) -> Self {
        Error::InvariantViolation(msg.into())
    }

    /// Strips [`Error::Run`] context and returns the underlying cause.
    pub fn root(&self) -> &Error {
        match self {
            Error::Run { source, .. } => source.root(),
            other => other,
        }
    }
}

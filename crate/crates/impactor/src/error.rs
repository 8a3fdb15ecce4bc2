//! Crate-wide error type with a stable validation/numeric split.
//!
//! The CLI maps [`ErrorKind::Validation`] to exit code 2 and
//! [`ErrorKind::Numeric`] to exit code 3; messages are module-qualified.

use thiserror::Error;

/// Coarse error category driving the CLI exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad inputs: malformed data, inconsistent configuration, contract
    /// violations detected before any sampling.
    Validation,
    /// Numerical failure during inference: non-finite intermediates,
    /// singular conditional systems, divergent scales.
    Numeric,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{module}: {message}")]
    Validation { module: &'static str, message: String },

    #[error("{module}: {message}")]
    Numeric { module: &'static str, message: String },

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn validation(module: &'static str, message: impl Into<String>) -> Self {
        Error::Validation { module, message: message.into() }
    }

    pub fn numeric(module: &'static str, message: impl Into<String>) -> Self {
        Error::Numeric { module, message: message.into() }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Numeric { .. } => ErrorKind::Numeric,
            Error::Validation { .. } | Error::Io(_) => ErrorKind::Validation,
        }
    }
}

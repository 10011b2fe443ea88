use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value in {what} at index {index}")]
    NonFinite { what: &'static str, index: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("observation at t={t} has zero probability under every state")]
    ImpossibleObservation { t: usize },

    #[error("matrix is not positive definite ({0})")]
    NotPositiveDefinite(&'static str),

    #[error("zero total variance")]
    ZeroVariance,

    #[error("dataset error: {0}")]
    Data(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("content hash mismatch: manifest says {expected}, blobs hash to {actual}")]
    HashMismatch { expected: String, actual: String },

    #[error("unsupported checkpoint format version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("tensor `{name}` truncated: expected {expected} bytes, blob has {actual}")]
    Truncated {
        name: String,
        expected: usize,
        actual: usize,
    },

    #[error("malformed checkpoint: {0}")]
    Malformed(String),

    #[error("checkpoint holds a `{found}` model, expected `{expected}`")]
    WrongKind { found: String, expected: String },
}

/// Coarse failure classes, used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Data,
    Numerical,
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Context { source, .. } => source.class(),
            Error::InvalidArgument(_) | Error::Shape(_) => ErrorClass::Usage,
            Error::Empty(_) | Error::Data(_) | Error::Io { .. } | Error::Checkpoint(_) => {
                ErrorClass::Data
            }
            Error::NonFinite { .. }
            | Error::ImpossibleObservation { .. }
            | Error::NotPositiveDefinite(_)
            | Error::ZeroVariance => ErrorClass::Numerical,
        }
    }

    /// Innermost error, skipping context wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            e => e,
        }
    }
}

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("scenario parse error: {0}")]
    Parse(String),

    #[error("invalid {field}: {message}")]
    Validation { field: String, message: String },

    #[error("no route from node {from} to node {to}")]
    NoPath { from: u32, to: u32 },

    #[error("replay buffer holds {available} transitions, {requested} requested")]
    InsufficientSamples { available: usize, requested: usize },

    #[error("non-finite loss at gradient step {step}: {detail}")]
    NonFiniteLoss { step: u64, detail: String },

    #[error("checkpoint format version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("corrupted checkpoint: {0}")]
    Corrupt(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Errors caused by bad input (documents, flags, files) rather than by a
    /// failure while running.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::Parse(_)
                | Error::Validation { .. }
                | Error::NoPath { .. }
                | Error::VersionMismatch { .. }
                | Error::Corrupt(_)
        ) || matches!(self, Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound)
    }
}

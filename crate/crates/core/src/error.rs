use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Malformed binary payload; `offset` is the byte position where decoding failed.
    #[error("format error at byte {offset}: {message}")]
    BinaryFormat { offset: u64, message: String },

    /// Malformed text payload; `line` is 1-based.
    #[error("format error at line {line}: {message}")]
    TextFormat { line: usize, message: String },

    #[error("mask '{label}' has no pixels with a valid depth")]
    EmptyMask { label: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for malformed-input errors (as opposed to bad arguments).
    pub fn is_format(&self) -> bool {
        matches!(
            self,
            Error::BinaryFormat { .. } | Error::TextFormat { .. } | Error::Json(_)
        )
    }
}

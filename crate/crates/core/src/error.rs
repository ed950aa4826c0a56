use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("size mismatch: {what} is {got:?}, expected {expected:?}")]
    SizeMismatch {
        what: &'static str,
        got: (usize, usize),
        expected: (usize, usize),
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("{}: {message}{}", path.display(), offset.map(|o| format!(" (at byte {o})")).unwrap_or_default())]
    Format {
        path: PathBuf,
        offset: Option<u64>,
        message: String,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("manifest key `{key}`: {message}")]
    Manifest { key: String, message: String },

    #[error("frame {index}: {source}")]
    Frame {
        index: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, offset: Option<u64>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            offset,
            message: message.into(),
        }
    }

    pub(crate) fn manifest(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Manifest {
            key: key.into(),
            message: message.into(),
        }
    }

    pub(crate) fn in_frame(self, index: usize) -> Self {
        Error::Frame {
            index,
            source: Box::new(self),
        }
    }
}

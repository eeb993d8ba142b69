//! Error type shared by every module of the crate.

use std::path::PathBuf;

/// Coarse failure class, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Io,
    Schema,
    Numeric,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed WAV file {path}: {message}")]
    Wav { path: PathBuf, message: String },

    #[error("json error in {context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },

    #[error("csv error in {context}: {message}")]
    Csv { context: String, message: String },

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("row {row}: {message}")]
    BadRow { row: usize, message: String },

    #[error("configuration error in {context}: {message}")]
    Config { context: String, message: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("unsupported format version {found} (expected {expected})")]
    FormatVersion { found: u32, expected: u32 },

    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Io { .. } => ErrorKind::Io,
            Error::Numeric(_) => ErrorKind::Numeric,
            _ => ErrorKind::Schema,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json {
            context: context.into(),
            source,
        }
    }

    pub(crate) fn csv(context: impl Into<String>, err: impl std::fmt::Display) -> Self {
        Error::Csv {
            context: context.into(),
            message: err.to_string(),
        }
    }

    pub(crate) fn invalid(message: impl Into<String>) -> Self {
        Error::InvalidInput(message.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

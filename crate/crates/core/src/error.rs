use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the detection pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {stage}: {detail}")]
    Shape { stage: &'static str, detail: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("line {line}: {detail}")]
    Row { line: usize, detail: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid data: {0}")]
    Data(String),

    #[error("non-finite value produced in stage `{stage}`")]
    NonFinite { stage: String },

    #[error("checkpoint rejected: {0}")]
    Checkpoint(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Coarse classification used by the command-line front end to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numeric,
    Io,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) | Error::Checkpoint(_) => ErrorKind::Config,
            Error::Schema(_) | Error::Row { .. } | Error::Data(_) | Error::Shape { .. } => {
                ErrorKind::Data
            }
            Error::NonFinite { .. } => ErrorKind::Numeric,
            Error::Io { .. } | Error::Json(_) => ErrorKind::Io,
        }
    }

    pub(crate) fn shape(stage: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            stage,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

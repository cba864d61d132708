use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("non-finite value produced by {op} (node {node})")]
    NonFinite { op: &'static str, node: usize },

    #[error("internal error: {0}")]
    Internal(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {msg}")]
    Format { path: PathBuf, msg: String },

    #[error("loader error at row {row}: {msg}")]
    Loader { row: usize, msg: String },

    #[error("split error: {0}")]
    Split(String),
}

impl Error {
    /// Stable machine-readable code used as the CLI error prefix.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Dimension { .. } => "E_DIM",
            Error::Config(_) => "E_CONFIG",
            Error::Parameter(_) => "E_PARAM",
            Error::Degenerate(_) => "E_DEGENERATE",
            Error::Input(_) => "E_INPUT",
            Error::NonFinite { .. } => "E_NONFINITE",
            Error::Internal(_) => "E_INTERNAL",
            Error::Io { .. } => "E_IO",
            Error::Format { .. } => "E_FORMAT",
            Error::Loader { .. } => "E_LOADER",
            Error::Split(_) => "E_SPLIT",
        }
    }

    pub(crate) fn dim(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Dimension {
            op,
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

use std::path::PathBuf;

use thiserror::Error;

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] spoofprompt::Error),

    #[error("{0} already exists and is not empty; pass --force to replace it")]
    RunExists(PathBuf),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("run manifest: {0}")]
    Manifest(String),

    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub fn code(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.code(),
            CliError::RunExists(_) => "E_EXISTS",
            CliError::Io { .. } => "E_IO",
            CliError::Manifest(_) => "E_MANIFEST",
            CliError::Usage(_) => "E_USAGE",
        }
    }

    /// One-line rendering: `error[CODE]: message`.
    pub fn render(&self) -> String {
        let msg = self.to_string().replace('\n', " ");
        format!("error[{}]: {msg}", self.code())
    }
}

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("missing required key `{0}`")]
    MissingKey(&'static str),
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("initial data: {0}")]
    Ingest(String),
    #[error("dump: {0}")]
    Format(String),
    #[error("invariant violated: {}", .0.join(", "))]
    Invariant(Vec<String>),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Core(#[from] gasflow_core::Error),
}

impl CliError {
    /// Stable identifier printed in machine-readable error output.
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Io { .. } => "io",
            CliError::Parse { .. } => "config-parse",
            CliError::UnknownKey { .. } => "config-unknown-key",
            CliError::MissingKey(_) => "config-missing-key",
            CliError::Invalid(_) => "config-invalid",
            CliError::Ingest(_) => "ingest",
            CliError::Format(_) => "dump-format",
            CliError::Invariant(_) => "invariant-violated",
            CliError::Usage(_) => "usage",
            CliError::Json(_) => "json",
            CliError::Core(e) => e.kind(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

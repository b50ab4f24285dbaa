use thiserror::Error;

/// CLI failure, each kind with its own process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("unknown option: {0}")]
    UnknownFlag(String),
    #[error("conflicting options: {0}")]
    Conflict(String),
    #[error("ambiguous key `{key}` has no unit; use {suggestion}")]
    AmbiguousUnit { key: String, suggestion: String },
    #[error("i/o error: {0}")]
    Io(String),
    #[error("invalid input data: {0}")]
    Data(String),
    #[error("model error: {0}")]
    Model(#[from] weakshift_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::UnknownFlag(_) => 3,
            CliError::Conflict(_) => 4,
            CliError::AmbiguousUnit { .. } => 5,
            CliError::Io(_) => 6,
            CliError::Data(_) => 7,
            CliError::Model(_) => 8,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

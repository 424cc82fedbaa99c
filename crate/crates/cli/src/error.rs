use thiserror::Error;

/// Failures of a subcommand, split by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Malformed configuration or arguments (exit 2).
    #[error("configuration error: {0}")]
    Config(String),

    #[error("cannot read config {path}: {source}")]
    ConfigIo { path: String, source: std::io::Error },

    #[error("{0}")]
    Lab(#[from] sle_lab::Error),

    #[error("output error at {path}: {source}")]
    Output { path: String, source: std::io::Error },

    #[error("report serialization failed: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::ConfigIo { .. } => 2,
            _ => 1,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

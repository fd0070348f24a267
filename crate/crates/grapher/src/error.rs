use std::path::Path;

use grapher_core::Error as CoreError;

/// Failure of a command, carrying its exit-code class.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad flags or config values (exit code 1).
    #[error("{0}")]
    Usage(String),
    /// Unreadable or malformed input files (exit code 2).
    #[error("{0}")]
    Data(String),
    /// NaN/Inf during training or inference (exit code 3).
    #[error("{0}")]
    Numerical(String),
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Data(format!("{}: {e}", path.display()))
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Config(_) => CliError::Usage(e.to_string()),
            CoreError::Numerical(_) => CliError::Numerical(e.to_string()),
            CoreError::Capacity { .. } | CoreError::InvalidInput(_) | CoreError::Shape { .. } => CliError::Data(e.to_string()),
        }
    }
}

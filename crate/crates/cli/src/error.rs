use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),

    #[error(transparent)]
    Core(#[from] tentlab_core::Error),

    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Core(e) if e.is_validation() => 2,
            CliError::Core(_) | CliError::Io { .. } => 3,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad or unreadable configuration; exit status 2.
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Compute(#[from] turnpike_core::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    /// The command ran but a check did not hold; exit status 1.
    #[error("validation failed: {0}")]
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            _ => 1,
        }
    }
}

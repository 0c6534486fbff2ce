use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("row {row}, column {col}: {message}")]
    Parse {
        row: usize,
        col: usize,
        message: String,
    },
    #[error("{0}")]
    InvalidInput(String),
    #[error("{0}")]
    Io(String),
    #[error(transparent)]
    Numerical(#[from] wasserstat::Error),
}

impl CliError {
    pub fn name(&self) -> &'static str {
        match self {
            CliError::Config(_) => "ConfigError",
            CliError::Parse { .. } => "ParseError",
            CliError::InvalidInput(_) => "InvalidInput",
            CliError::Io(_) => "IoError",
            CliError::Numerical(e) => e.name(),
        }
    }

    /// 1 for anything wrong with the request, 2 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Numerical(wasserstat::Error::InvalidInput(_)) => 1,
            CliError::Numerical(_) => 2,
            _ => 1,
        }
    }
}

pub fn config(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

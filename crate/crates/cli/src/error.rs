use std::process::ExitCode;

use stein_bounds::Error;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl CliError {
    /// Failures while reading user-supplied data files are input errors.
    pub fn input(e: Error) -> CliError {
        match e {
            Error::Parse { .. } | Error::Io(_) | Error::InvalidInput(_) => {
                CliError::Config(e.to_string())
            }
            other => other.into(),
        }
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Config(_) => 2,
            CliError::Precondition(_) => 3,
            CliError::Numerical(_) => 4,
        })
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Numerical(_) | Error::Io(_) => CliError::Numerical(e.to_string()),
            Error::Parse { .. } => CliError::Config(e.to_string()),
            _ => CliError::Precondition(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Numerical(format!("io: {e}"))
    }
}

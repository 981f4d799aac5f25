use conic_ke::Error;
use thiserror::Error as ThisError;

#[derive(Debug, ThisError)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Numerical(#[from] Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// Process exit code; see `--help`.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Io(_) => 6,
            CliError::Numerical(e) => match e {
                Error::InvalidParameter(_) | Error::Parse(_) => 1,
                Error::NewtonDiverged { .. } => 2,
                Error::PositivityLost { .. } | Error::NonPositiveMetric { .. } => 3,
                Error::PathStalled { .. } => 4,
                _ => 5,
            },
        }
    }
}

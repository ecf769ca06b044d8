use movrptw::Error;

/// Failure of a command, carrying the process exit code it maps to.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    /// The command ran but its output failed a quality gate.
    #[error("{0}")]
    Quality(String),

    #[error(transparent)]
    Core(#[from] Error),
}

impl CliError {
    /// 1 for usage and configuration problems, 2 for quality-gate failures, 3 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Quality(_) => 2,
            CliError::Core(e) => match e {
                Error::Config(_)
                | Error::Parse { .. }
                | Error::Schema { .. }
                | Error::Io { .. }
                | Error::Json(_)
                | Error::Csv(_)
                | Error::Checkpoint(_)
                | Error::InvalidInstance(_)
                | Error::InvalidWindow { .. }
                | Error::InvalidWeights(..)
                | Error::UnknownCustomer(_) => 1,
                _ => 3,
            },
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

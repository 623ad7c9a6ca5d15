use std::path::Path;

use pairdose::Error;
use thiserror::Error as ThisError;

#[derive(Debug, ThisError)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("validation failed:\n  {}", .0.join("\n  "))]
    Validation(Vec<String>),

    #[error(transparent)]
    Core(#[from] Error),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    /// 0 success, 2 validation failure, 3 infeasible matching, 4 config
    /// error, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 4,
            CliError::Validation(_) => 2,
            CliError::Io { .. } => 1,
            CliError::Core(e) => match e {
                Error::Infeasible | Error::OddSize(_) => 3,
                Error::InvalidArgument(_) => 4,
                Error::EmptyDataset
                | Error::DimensionMismatch(_)
                | Error::SingularCovariance
                | Error::NonPositiveOutcome { .. }
                | Error::UnknownUnit(_)
                | Error::Parse { .. }
                | Error::Csv(_) => 2,
                Error::Io { .. } => 1,
            },
        }
    }
}

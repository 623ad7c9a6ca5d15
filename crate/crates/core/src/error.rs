use thiserror::Error;

/// Errors raised by the library. Variants carry enough context to name the
/// offending unit, file, or parameter.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty dataset")]
    EmptyDataset,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error(
        "covariance matrix is singular or not positive definite; \
         rerun with ridge regularization enabled (--ridge)"
    )]
    SingularCovariance,

    #[error("matching is infeasible: no perfect matching with finite total distance exists")]
    Infeasible,

    #[error("distance matrix has odd size {0}; add sinks to restore parity")]
    OddSize(usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unit {unit}: outcome {value} is not positive after adding log offset {offset}")]
    NonPositiveOutcome {
        unit: String,
        value: f64,
        offset: f64,
    },

    #[error("unknown unit id {0}")]
    UnknownUnit(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: u64,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn parse(path: impl Into<String>, line: u64, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}

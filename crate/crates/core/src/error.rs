use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("coefficient norm {norm:.3e} exceeds the separation threshold; the data look separated")]
    Separation { norm: f64 },

    #[error("{what} is numerically singular (condition number {condition:.3e})")]
    Singular { what: &'static str, condition: f64 },

    #[error("no fit converged: {0}")]
    NotConverged(String),

    #[error("line {line}, column `{column}`: {message}")]
    Data {
        line: u64,
        column: String,
        message: String,
    },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn dims(context: &'static str, expected: usize, found: usize) -> Self {
        Error::DimensionMismatch {
            context,
            expected,
            found,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}

use thiserror::Error;

/// Errors raised by the library.
///
/// `Usage` covers every caller-side contract violation (bad dimensions, bad
/// parameters, rejected schedules). `NumericFailure` is reserved for a solver
/// producing a non-finite iterate, which on bounded instances means a bug.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("{0}")]
    Usage(String),

    #[error("non-finite iterate at iteration {iteration} (user {user}){}", sample.map(|s| format!(" in sample {s}")).unwrap_or_default())]
    NumericFailure {
        iteration: usize,
        user: usize,
        sample: Option<usize>,
    },

    #[error("io error: {0}")]
    Io(String),

    #[error("malformed data: {0}")]
    Format(String),
}

impl Error {
    pub fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    /// True for errors that the CLI reports with the numeric-failure exit code.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::NumericFailure { .. })
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

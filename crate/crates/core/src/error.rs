use thiserror::Error;

/// Errors raised by the analytic evaluators, the path machinery and the
/// Monte Carlo engine.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("time {time} is beyond the state path horizon {horizon}")]
    HorizonExceeded { time: f64, horizon: f64 },

    #[error(
        "quadrature evaluation budget exhausted after {evaluations} calls \
         (partial value {partial}, error estimate {abs_error})"
    )]
    BudgetExceeded {
        partial: f64,
        abs_error: f64,
        evaluations: usize,
    },

    #[error("conditioning event has probability {probability:e}; conditional is undefined")]
    UndefinedConditional { probability: f64 },

    #[error("invalid interval: require s < t, got s = {s}, t = {t}")]
    InvalidInterval { s: f64, t: f64 },

    #[error("invalid bound specification: {0}")]
    InvalidSpec(String),

    #[error("unsupported scenario: {0}")]
    Unsupported(String),

    #[error("second moment is not finite: {0}")]
    InfiniteMoment(String),

    #[error("dimension mismatch: expected {expected} times, got {got}")]
    ShapeMismatch { expected: usize, got: usize },

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    /// True for errors caused by bad inputs rather than numerical trouble.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidParameter(_)
                | Error::InvalidInterval { .. }
                | Error::InvalidSpec(_)
                | Error::Unsupported(_)
                | Error::ShapeMismatch { .. }
                | Error::Io(_)
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

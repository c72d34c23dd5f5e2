use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input at a given (1-based) line.
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    /// Data violating an event-series or dataset invariant.
    #[error("invalid data: {0}")]
    InvalidData(String),

    /// An estimator cannot be evaluated on the given data.
    #[error("estimator undefined: {0}")]
    EstimatorUndefined(String),

    /// Iterative fit did not converge; carries the last iterate.
    #[error("no convergence after {iterations} iterations (last shape {last_shape})")]
    NonConvergence { iterations: usize, last_shape: f64 },

    /// Statistic diverges (log singularity of the weighted functional).
    #[error("statistic is infinite: {0}")]
    InfiniteStatistic(String),

    /// Statistic has no defined value on this input.
    #[error("statistic undefined: {0}")]
    UndefinedStatistic(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("limit table unavailable: {0}")]
    TableMissing(String),

    #[error("resource cap exceeded: {0}")]
    ResourceCap(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }

    /// Whether the error stems from a numerical condition rather than bad input.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::EstimatorUndefined(_)
                | Error::NonConvergence { .. }
                | Error::InfiniteStatistic(_)
                | Error::UndefinedStatistic(_)
        )
    }
}

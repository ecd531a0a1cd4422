use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Message shown when a simulation exceeds its wall-clock budget.
pub const TIME_LIMIT_MESSAGE: &str = "reached CPU time limit";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A parameter violated one of its invariants. `name` is the parameter key.
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("degenerate variance: {0}")]
    DegenerateVariance(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("Monte Carlo configuration needs at least one iteration")]
    ZeroIterations,

    #[error("calibration did not converge after {steps} bisection steps")]
    NonConvergence { steps: usize },

    #[error("calibration infeasible: {0}")]
    Infeasible(String),

    #[error("{}", TIME_LIMIT_MESSAGE)]
    TimeLimit,

    #[error("computation cancelled")]
    Cancelled,

    #[error("empty effect grid")]
    EmptyGrid,

    /// Problems with an uploaded participant dataset. Rows count from 1 and
    /// include the header line.
    #[error("dataset row {row}: {reason}")]
    DatasetRow { row: usize, reason: String },

    #[error("dataset has no participant rows")]
    EmptyDataset,

    #[error("cannot estimate {0}: no participants in that stratum")]
    EmptyStratum(String),

    #[error("parameter file line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
}

impl Error {
    pub(crate) fn invalid(name: &str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.to_string(),
            reason: reason.into(),
        }
    }

    /// True for errors caused by user input rather than by the computation.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidParameter { .. }
                | Error::DegenerateVariance(_)
                | Error::DimensionMismatch { .. }
                | Error::ZeroIterations
                | Error::EmptyGrid
                | Error::DatasetRow { .. }
                | Error::EmptyDataset
                | Error::EmptyStratum(_)
                | Error::MalformedRow { .. }
        )
    }
}

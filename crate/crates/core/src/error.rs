use thiserror::Error;

use crate::avg_solver::AvgSolution;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("length mismatch: expected {expected} entries, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("user index {index} out of range for {k} users")]
    IndexOutOfRange { index: usize, k: usize },

    #[error("{k} users exceeds the enumeration cap of {cap}")]
    TooManyUsers { k: usize, cap: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("unknown algorithm tag `{0}`")]
    UnknownAlgorithm(String),

    #[error("dual search did not converge after {} iterations", .0.report.iterations)]
    NonConvergence(Box<AvgSolution>),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Short machine-readable name used in structured error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "invalid_input",
            Error::LengthMismatch { .. } => "length_mismatch",
            Error::IndexOutOfRange { .. } => "index_out_of_range",
            Error::TooManyUsers { .. } => "too_many_users",
            Error::Precondition(_) => "precondition",
            Error::UnknownAlgorithm(_) => "unknown_algorithm",
            Error::NonConvergence(_) => "non_convergence",
            Error::Io(_) => "io",
        }
    }
}

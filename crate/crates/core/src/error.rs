use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller broke an operation's precondition (shapes, ranges, stale state).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    /// An iterative solver did not converge within its budget.
    #[error("{solver} failed to converge (residual {residual:e})")]
    SolverFailure { solver: &'static str, residual: f64 },

    /// The dominant eigenvalue is (nearly) defective; its derivative is ill-conditioned.
    #[error("dominant eigenvalue is near-defective (defect score {score:e})")]
    DefectiveEigenvalue { score: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    /// True for failures of the numerical core (solver divergence, defective eigenpairs,
    /// non-finite values) as opposed to usage or I/O errors.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::SolverFailure { .. } | Error::DefectiveEigenvalue { .. } | Error::NonFinite(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

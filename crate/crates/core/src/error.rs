//! Error types shared across the crate.

/// Errors produced by solvers, subproblem routines, and the bench toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The evaluation budget is spent. Solvers catch this and terminate
    /// cleanly with whatever incumbent they hold.
    #[error("evaluation budget exhausted")]
    BudgetExhausted,

    /// `F` returned a NaN or infinity.
    #[error("function evaluation returned non-finite values at {point:?}")]
    EvaluationFailure { point: Vec<f64> },

    #[error("subproblem solve failed: {0}")]
    SubproblemFailure(String),

    #[error("internal consistency error: {0}")]
    Internal(String),

    #[error("missing prerequisite: {0}")]
    MissingPrerequisite(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}

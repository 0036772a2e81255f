use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("state space has {count} states, above the enumeration guard of {limit}")]
    GuardExceeded { count: u128, limit: usize },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("state is not a member of the feasible set")]
    InfeasibleState,

    #[error("finite-difference step must be positive, got {0}")]
    InvalidStep(f64),

    #[error("every downstream gradient in the batch has zero norm")]
    AllDegenerate,

    #[error("empty batch")]
    EmptyBatch,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("i/o: {0}")]
    Io(String),
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}

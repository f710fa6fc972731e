use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("size mismatch: expected {expected}, got {got}")]
    SizeMismatch { expected: usize, got: usize },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("matrix not positive definite (pivot {0})")]
    NotPositiveDefinite(usize),

    #[error("inner newton failed at time step {step}: residual {residual:e}")]
    StepDiverged { step: usize, residual: f64 },

    #[error("non-finite value encountered at time step {0}")]
    NonFinite(usize),

    #[error("inadmissible data: {0}")]
    Inadmissible(String),

    #[error("|f| below division floor at nodes {0:?}")]
    SmallDivisor(Vec<usize>),

    #[error("no convergence: {0}")]
    NoConvergence(String),

    #[error("sensitivity solve for column {column} failed: {source}")]
    Column {
        column: usize,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::SizeMismatch { expected, got })
    }
}

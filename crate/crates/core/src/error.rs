use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("condition number undefined: {0}")]
    UndefinedCondition(String),
    #[error("network does not mix: second largest eigenvalue modulus {0} is not below 1")]
    NotMixing(f64),
    #[error("inadmissible primal-dual matrices: {0}")]
    InadmissibleMatrices(String),
    #[error("delta policy not applicable: {0}")]
    DeltaPolicy(String),
    #[error("under-mixed: {0}")]
    UnderMixing(String),
    #[error("solver stopped after {iterations} iterations with residual {residual:e}")]
    NotConverged { iterations: usize, residual: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

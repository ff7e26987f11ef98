use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),
    #[error("index {index} out of range (limit {limit})")]
    OutOfRange { index: usize, limit: usize },
    #[error("degenerate operator: {0}")]
    DegenerateOperator(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("Fock cutoff too small: {0}")]
    CutoffOverflow(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("step size underflow at t = {t}: problem is too stiff for the explicit integrator")]
    Stiffness { t: f64 },
    #[error("dimension {dim} exceeds the dense limit {limit}")]
    TooLarge { dim: usize, limit: usize },
    #[error("jump triggered but every channel has zero weight")]
    NoChannel,
    #[error("series has not saturated: {0}")]
    NotSaturated(String),
    #[error("not converged: {0}")]
    NotConverged(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, Error>;

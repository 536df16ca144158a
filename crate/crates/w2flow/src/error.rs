use thiserror::Error;

/// Errors surfaced by measure construction, solvers, and training.
#[derive(Debug, Error)]
pub enum W2Error {
    #[error("empty cloud")]
    EmptyCloud,

    #[error("invalid cloud: {0}")]
    InvalidCloud(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("covariance matrix is not symmetric positive-definite")]
    NotSpd,

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("use solve_exact: {0}")]
    UseSolveExact(String),

    #[error("infeasible weights: total mass mismatch {0:e}")]
    MassMismatch(f64),

    #[error("empty row mass in transport plan (row {0})")]
    EmptyRowMass(usize),

    #[error("parameter out of range: {0}")]
    OutOfRange(String),

    #[error("invalid network configuration: {0}")]
    InvalidNetwork(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("training aborted: {0}")]
    TrainingAborted(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("config error: {0}")]
    Config(String),
}

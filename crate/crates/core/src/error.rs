use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("size mismatch: expected {expected}, got {actual}")]
    SizeMismatch { expected: usize, actual: usize },
    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },
    #[error("negative surface diffusivity {value} at boundary node {index}")]
    NegativeDiffusivity { index: usize, value: f64 },
    #[error("invalid nonlinearity: {0}")]
    InvalidFunction(String),
    #[error("lambda must be positive, got {0}")]
    NonPositiveLambda(f64),
    #[error("diffusivity must be bounded below by a positive constant (min {0})")]
    DegenerateDiffusivity(f64),
    #[error("linear solve failed: {0}")]
    SolveFailure(String),
    #[error("fixed-point iteration failed to contract (ratio {ratio:.4}, {iterations} iterations)")]
    NonContraction { ratio: f64, iterations: usize },
    #[error("invalid time step {0}")]
    InvalidStep(f64),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("shift violation: lambda {lambda} must exceed c_f_tilde {c_f_tilde}")]
    ShiftViolation { lambda: f64, c_f_tilde: f64 },
    #[error("eigensolver failed: {0}")]
    EigenFailure(String),
    #[error("trial field has zero boundary trace")]
    ZeroTrace,
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("integrand vanishes at the initial value (equilibrium)")]
    NonIntegrable,
    #[error("subsolution evaluated past its blow-up time (t = {0})")]
    PastBlowup(f64),
    #[error("insufficient data for fit: {0}")]
    InsufficientData(String),
    #[error("numerical fault: {0}")]
    Faulted(String),
}

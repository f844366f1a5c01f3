use thiserror::Error;

use crate::solver::GmresReport;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("duplicate points at lines {first} and {second}")]
    DuplicatePoint { first: usize, second: usize },

    #[error("{what} out of range: {value}")]
    OutOfRange { what: &'static str, value: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },

    #[error("{what} of size {n} exceeds the configured cap {cap}")]
    TooLarge { what: &'static str, n: usize, cap: usize },

    #[error("singular system: pivot {pivot:e} below threshold {threshold:e}")]
    SingularSystem { pivot: f64, threshold: f64 },

    #[error("coefficient vector violates the moment conditions (max |Φᵀa| = {residual:e})")]
    ConstraintViolation { residual: f64 },

    #[error("neighborhood of center {center} is not unisolvent (λ_min(G) = {lambda_min:e})")]
    NonUnisolventNeighborhood { center: usize, lambda_min: f64 },

    #[error("{} local stencil(s) could not be solved; first failing centers: {:?}", centers.len(), &centers[..centers.len().min(8)])]
    StencilFailure { centers: Vec<usize> },

    #[error("GMRES did not converge: relative residual {:e} after {} iterations", .0.report.final_relres, .0.report.iterations)]
    NotConverged(Box<NotConverged>),

    #[error("insufficient samples for a decay fit: {got} usable, need at least {need}")]
    InsufficientSamples { got: usize, need: usize },
}

/// Best iterate of a GMRES run that missed its tolerance.
#[derive(Debug, Clone)]
pub struct NotConverged {
    pub solution: Vec<f64>,
    pub report: GmresReport,
}

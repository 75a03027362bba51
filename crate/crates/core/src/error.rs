use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("diffusion coefficient {value:e} is not positive at quadrature point {index}")]
    NonPositiveCoefficient { index: usize, value: f64 },

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("requested {requested} expansion terms but only {available} vertices are available")]
    TruncationTooLarge { requested: usize, available: usize },

    #[error("field minimum {min:e} is not positive")]
    NonPositiveField { min: f64 },

    #[error("collocation grid of {nodes} nodes exceeds the node cap {cap}")]
    BudgetExceeded { nodes: usize, cap: usize },

    #[error("matrix is not positive definite (pivot {pivot:e} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },

    #[error("inner solve for sample {sample} stopped at relative residual {residual:e}")]
    InnerSolveFailure { sample: usize, residual: f64 },

    #[error("core coupling solve failed: {0}")]
    CoreSolveFailure(String),

    #[error("{what} of size {size} exceeds the cap {cap}")]
    SizeCapExceeded {
        what: &'static str,
        size: usize,
        cap: usize,
    },

    #[error("no convergence after {iterations} iterations (relative residual {residual:e})")]
    MaxIterationsExceeded { iterations: usize, residual: f64 },

    #[error("operation requires the {required} control space")]
    ControlSpaceMismatch { required: &'static str },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn dim(context: &'static str, expected: usize, got: usize) -> Self {
        Error::DimensionMismatch {
            context,
            expected,
            got,
        }
    }
}

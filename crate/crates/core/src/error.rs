use thiserror::Error;

/// Errors produced by the estimation library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("coordinate outside the metric domain: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("matrix is not positive definite (non-positive pivot at index {pivot})")]
    NotPositiveDefinite { pivot: usize },

    #[error("degenerate correlation {rho} for pair ({i}, {j})")]
    DegenerateCorrelation { i: usize, j: usize, rho: f64 },

    #[error("design grid has {available} points but {requested} were requested")]
    DesignSize { available: usize, requested: usize },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("information matrix is singular")]
    SingularInformation,

    #[error("matrix determinant is not positive")]
    Definiteness,

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("i/o error: {0}")]
    Io(String),

    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

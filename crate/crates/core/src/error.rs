use thiserror::Error;

/// Errors raised by the solvers, the data layer and the benchmark harness.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {what} (expected {expected}, got {got})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("column {0} has (near) zero norm and cannot be standardized")]
    DegenerateColumn(usize),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("need at least {needed} observations, got {got}")]
    TooFewObservations { needed: usize, got: usize },

    #[error("restricted Gram matrix is singular or ill-conditioned (condition number {0:e})")]
    SingularSubmatrix(f64),

    #[error("residual sup-correlation {0:e} is below the denominator floor")]
    DegenerateDenominator(f64),

    #[error("exact fit: residual norm vanished")]
    ExactFit,

    #[error("training fold has {0} observations, need at least 2")]
    FoldTooSmall(usize),

    #[error("every bootstrap fit failed")]
    AllFitsFailed,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("parse error at row {row}, column {col}: {msg}")]
    Parse { row: usize, col: usize, msg: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

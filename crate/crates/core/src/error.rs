use thiserror::Error;

/// Errors raised by the laboratory's numerical routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not symmetric: relative asymmetry {asymmetry:.3e} at ({row}, {col})")]
    NotSymmetric { row: usize, col: usize, asymmetry: f64 },

    #[error("non-finite entry in input: {0}")]
    NonFinite(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("index {index} out of range 0..{len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("node {node} has stencil depth {depth}, needs at least {required}")]
    InsufficientDepth { node: usize, depth: usize, required: usize },

    #[error("ball of radius {radius} around {center:?} contains {found} grid nodes, needs {required}")]
    EmptyBall { center: Vec<f64>, radius: f64, found: usize, required: usize },

    #[error("linear solve failed at Newton iteration {iteration}: {reason}")]
    LinearSolve { iteration: usize, reason: String },

    #[error("could not sample an admissible spectrum for {constraint} after {attempts} attempts")]
    SamplingFailed { constraint: String, attempts: usize },

    #[error("malformed grid file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

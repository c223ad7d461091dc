//! Error type shared across the library.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numerical failure at step {step}: {detail}")]
    NumericalFailure { step: usize, detail: String },

    #[error("numerical failure at outer step {outer}: {source}")]
    OuterStepFailure {
        outer: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("curvature oracle unavailable and finite-difference fallback disabled")]
    MissingCurvatureOracle,

    #[error("linear system ill-conditioned: no convergence after {iterations} iterations (relative residual {relative_residual:.3e})")]
    IllConditioned {
        iterations: usize,
        relative_residual: f64,
    },

    #[error("unsupported problem: {0}")]
    UnsupportedProblem(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Attach the outer iteration index to a failure bubbling out of a solver loop.
    pub fn at_outer_step(self, outer: usize) -> Self {
        Error::OuterStepFailure {
            outer,
            source: Box::new(self),
        }
    }
}

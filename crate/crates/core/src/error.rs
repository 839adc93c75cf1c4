use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("field has {len} values but grid has {expected} cells")]
    ShapeMismatch { len: usize, expected: usize },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// The right-hand side of a Neumann Poisson problem is not (discretely)
    /// mean-zero, so no solution exists.
    #[error("Poisson compatibility violated: |mean(rhs)| = {mean:e} exceeds {tolerance:e}")]
    CompatibilityViolation { mean: f64, tolerance: f64 },

    #[error("linear solver did not converge in {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("non-finite value in computed field")]
    NonFinite,

    /// Wraps an error raised while advancing a time step.
    #[error("time step {step}: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("line search failed at iteration {iteration}: no decrease after {halvings} halvings")]
    LineSearchFailure { iteration: usize, halvings: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    pub(crate) fn at_step(self, step: usize) -> Self {
        Error::Step {
            step,
            source: Box::new(self),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

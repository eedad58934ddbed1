//! Error type shared across the crate.

use thiserror::Error;

/// Errors produced by interval construction, solvers, and the experiment
/// pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or out-of-domain input (non-finite values, empty lists,
    /// mismatched lengths, parameters outside their stated ranges).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A quantile-solver weight was zero, negative, or non-finite.
    #[error("invalid weight at index {index}: {value}")]
    InvalidWeight { index: usize, value: f64 },

    /// A propensity density evaluated to zero or a non-finite value at a
    /// queried point, violating the positivity assumption.
    #[error("positivity violation at index {index}: density {value} for (a={a}, x={x:?})")]
    PositivityViolation {
        index: usize,
        value: f64,
        a: f64,
        x: Vec<f64>,
    },

    /// Dual multipliers could not be made stationary inside their box,
    /// signalling that the supplied minimizer was not optimal.
    #[error("inconsistent dual solution: stationarity residual {residual} exceeds tolerance")]
    InconsistentSolution { residual: f64 },

    /// An iterative search exhausted its iteration budget.
    #[error("search failed to converge within {iterations} iterations ({context})")]
    Convergence { iterations: usize, context: String },

    /// Every tilt value in a hard-intervention solve was non-finite.
    #[error("degenerate tilt: no finite tilt values for a*={a_star}")]
    DegenerateTilt { a_star: f64 },

    /// A covariate group had too few samples to fit a conditional density.
    #[error("insufficient data for group {group:?}: {count} samples (need at least {needed})")]
    InsufficientData {
        group: Vec<f64>,
        count: usize,
        needed: usize,
    },

    /// Model training diverged.
    #[error("training failure at epoch {epoch}: {reason}")]
    TrainingFailure { epoch: usize, reason: String },

    /// File or serialization problem in the pipeline.
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

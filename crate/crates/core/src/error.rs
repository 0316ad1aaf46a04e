use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    /// Some interior nodes cannot reach absorption or a mass-losing row, so
    /// the Green operator of the interior kernel is infinite.
    #[error("non-Greenian component containing nodes {nodes:?}")]
    NonGreenian { nodes: Vec<usize> },

    #[error("length mismatch: expected {expected} values, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("node {node} is out of range for a grid with {n} nodes")]
    NodeOutOfRange { node: usize, n: usize },

    #[error("value at node {node} is NaN")]
    NotANumber { node: usize },

    #[error("value at node {node} is infinite where a finite value is required")]
    InfiniteValue { node: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("solver did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("linear program: {0}")]
    Lp(String),

    /// Two independent routes disagree; signals a solver bug rather than bad input.
    #[error("internal consistency check failed: {0}")]
    InternalConsistency(String),

    #[error("no strictly positive harmonic function on subdomain {index}: {detail}")]
    AssumptionViolated { index: usize, detail: String },

    #[error("instance too large for this routine: {0}")]
    TooLarge(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: u64, message: String },
}

impl Error {
    /// Whether the error stems from malformed or inadmissible input, as opposed
    /// to a solver failing on valid input.
    pub fn is_input_error(&self) -> bool {
        !matches!(
            self,
            Error::NotConverged { .. } | Error::InternalConsistency(_) | Error::Lp(_)
        )
    }
}

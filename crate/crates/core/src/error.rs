use thiserror::Error;

/// Errors raised by samplers, estimators and the Monte Carlo machinery.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A parameter lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The estimating criterion carries no information about the parameter.
    #[error("unidentified: {0}")]
    Unidentified(String),

    /// A covariance matrix is not positive semidefinite even after clipping.
    #[error("covariance not positive semidefinite: smallest eigenvalue {min_eigenvalue:e}")]
    NotPositiveSemidefinite { min_eigenvalue: f64 },

    /// Two grids that must coincide do not.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// A denominator vanished; the draw must be resampled.
    #[error("degenerate draw: {0}")]
    Degenerate(String),

    /// Numerical routine could not complete (e.g. factorisation size limits).
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Malformed input data.
    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}

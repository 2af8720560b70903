use thiserror::Error;

/// Errors raised by the numerical kernels.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("inconsistent data: {0}")]
    Inconsistent(String),
    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },
    #[error("singular system after deflation (kernel dimension {kernel_dim}): {detail}")]
    Singular { kernel_dim: usize, detail: String },
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("refused: {0}")]
    Refused(String),
    #[error("unknown surface `{0}`")]
    UnknownSurface(String),
}

pub type Result<T> = std::result::Result<T, Error>;

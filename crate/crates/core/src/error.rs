use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix is not symmetric (max asymmetry {asymmetry:.3e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("non-finite objective encountered at iteration {iter}")]
    NonFinite { iter: usize },

    #[error("degenerate: {0}")]
    Degenerate(String),

    #[error("indeterminate: Lanczos did not converge after {iters} iterations (residual {residual:.3e})")]
    LanczosNotConverged { iters: usize, residual: f64 },

    #[error("serialization: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn dim_err(what: impl Into<String>) -> Error {
    Error::Dimension(what.into())
}

pub(crate) fn invalid(what: impl Into<String>) -> Error {
    Error::InvalidParameter(what.into())
}

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Array extents disagree between two operands.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// An operation was applied to data living in the wrong domain.
    #[error("domain mismatch: expected {expected}, found {found}")]
    Domain {
        expected: &'static str,
        found: &'static str,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    /// Non-finite values or a failed factorization.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("did not converge after {iterations} iterations (final gradient norm {grad_norm:e})")]
    NotConverged { iterations: usize, grad_norm: f64 },

    #[error("training diverged at iteration {iteration}: loss {loss}, parameter norm {param_norm:e}")]
    Diverged {
        iteration: usize,
        loss: f64,
        param_norm: f64,
    },

    #[error("eigenfunction search diverged after {iterations} iterations (residual {residual:e})")]
    EigenDiverged { iterations: usize, residual: f64 },

    #[error("bad file format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

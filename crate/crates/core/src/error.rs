use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain where the quantity is defined.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dense cap exceeded: N = {n} > {cap}")]
    DenseCapExceeded { n: usize, cap: usize },

    #[error("resolvent is singular at theta = {re} + {im}i")]
    Singular { re: f64, im: f64 },

    #[error("eigensolver failed for matrix (seed {seed}, N = {n}, dist {dist}): {reason}")]
    Eigensolver {
        seed: u64,
        n: usize,
        dist: String,
        reason: String,
    },

    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

use thiserror::Error;

/// Errors raised by the estimators, the generator and the command-line layer.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or out-of-range input (dimensions, asymmetry, bad parameters).
    #[error("invalid input: {0}")]
    Input(String),

    /// A matrix that must be positive definite failed its Cholesky factorization.
    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    /// A numerical routine failed in a way that is not an input problem.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn not_pd(msg: impl Into<String>) -> Self {
        Error::NotPositiveDefinite(msg.into())
    }
}

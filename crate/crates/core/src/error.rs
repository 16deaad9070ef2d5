use thiserror::Error;

/// Errors shared by all solvers in this crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Active set or dictionary too close to collinear to continue.
    #[error("ill-conditioned system: {0}")]
    IllConditioned(String),

    /// A dictionary search found no admissible candidate.
    #[error("search failed: {0}")]
    SearchFailure(String),
}

pub type Result<T> = std::result::Result<T, Error>;

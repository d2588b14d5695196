use thiserror::Error;

/// Errors raised by the numerical routines in this crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("kernel singularity at coincident points")]
    Singularity,
    #[error("invalid input: {0}")]
    Input(String),
    #[error("quadrature did not reach tolerance {requested:e} (achieved {achieved:e})")]
    Accuracy { requested: f64, achieved: f64 },
    #[error("convergence failure: {0}")]
    Convergence(String),
    #[error("resource limit: {0}")]
    Resource(String),
    #[error("fit diagnostic: {0}")]
    Fit(String),
}

pub type Result<T> = std::result::Result<T, Error>;

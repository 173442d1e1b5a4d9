use alloc::string::String;

use thiserror::Error;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("matrix is not symmetric (max deviation {0:e})")]
    NotSymmetric(f64),
    #[error("matrix is not positive semidefinite")]
    NotPositiveSemidefinite,
    #[error("zero trace after regularization")]
    ZeroTrace,
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("unbalanced masses: supply {supply} vs demand {demand}")]
    Unbalanced { supply: f64, demand: f64 },
    #[error("transportation simplex did not terminate after {0} pivots")]
    NoConvergence(usize),
    #[error("insufficient data: {0}")]
    Insufficient(String),
    #[error("manifest: {0}")]
    Manifest(String),
}

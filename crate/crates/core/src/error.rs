use alloc::string::String;

/// Errors raised by the simulators, estimators and the posterior network.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("no convergence after {iterations} iterations: worst margin gap {worst_gap:.3e} in dimension {dimension}")]
    Convergence {
        iterations: usize,
        worst_gap: f64,
        dimension: usize,
    },
    #[error("estimation failed: {0}")]
    Estimation(String),
    #[error("encoding error: {0}")]
    Encoding(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("insufficient sample: needed {needed}, available {available}")]
    InsufficientSample { needed: usize, available: usize },
    #[error("numeric failure: {0}")]
    Numeric(String),
}

pub type Result<T> = core::result::Result<T, Error>;

macro_rules! domain {
    ($($arg:tt)*) => { $crate::error::Error::Domain(alloc::format!($($arg)*)) };
}
pub(crate) use domain;

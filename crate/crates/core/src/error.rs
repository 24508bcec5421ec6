use alloc::string::String;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid window: {0}")]
    InvalidWindow(String),
    #[error("point ({x}, {y}) lies outside the window")]
    PointOutsideWindow { x: f64, y: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("pattern has {n} points, at least {required} are needed")]
    DegeneratePattern { n: usize, required: usize },
    #[error("covariance matrix is not positive definite (pivot {pivot})")]
    NotPositiveDefinite { pivot: usize },
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("invalid network architecture: {0}")]
    InvalidArchitecture(String),
    #[error("standard deviation of {0} is zero")]
    ZeroVariance(String),
    #[error("r grids differ")]
    GridMismatch,
    #[error("did not converge after {iterations} iterations")]
    NoConvergence { iterations: usize },
}

pub type Result<T> = core::result::Result<T, Error>;

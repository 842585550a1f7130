use thiserror::Error;

/// Errors raised by the solver.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("velocity is not timelike (xdot^2 = {0})")]
    NonTimelikeVelocity(f64),
    #[error("endpoints have spacelike separation (interval^2 = {0})")]
    SpacelikeSeparation(f64),
    #[error("endpoints have null separation; the stationary duration vanishes")]
    NullSeparation,
    #[error("mass must be positive for a stationary duration")]
    ZeroMass,
    #[error("invariant duration must be nonzero")]
    ZeroDuration,
    #[error("invalid grid: {0}")]
    BadGrid(String),
    #[error("node index {index} outside 0..={max}")]
    IndexOutOfRange { index: usize, max: usize },
    #[error("lapse sample {index} is not positive ({value})")]
    NonPositiveLapse { index: usize, value: f64 },
    #[error("coefficient flow is singular: 1 + 2 sigma2_0 c vanishes at c* = {c_star}")]
    FlowSingularity { c_star: f64 },
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("wave functional underflows at the probe point (|psi| = exp({log_modulus}))")]
    NumericalUnderflow { log_modulus: f64 },
    #[error("log-duration Q = {0} is too close to zero")]
    DegenerateQ(f64),
    #[error("stationary search did not converge after {iterations} iterations (|grad| = {gradient_norm:e})")]
    NoConvergence {
        iterations: usize,
        gradient_norm: f64,
    },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("metric operator is not symmetric")]
    NotSymmetric,

    #[error("metric operator is not positive definite")]
    NotPositiveDefinite,

    #[error("unbounded LMO")]
    UnboundedLmo,

    #[error("set is unbounded: {0}")]
    UnboundedSet(&'static str),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("derivative order {requested} exceeds oracle maximum {max}")]
    OrderTooHigh { requested: usize, max: usize },

    #[error("assumption-violated: {0}")]
    AssumptionViolated(String),

    #[error("r = {r} lies outside the curvature domain [0, {r_max}]")]
    OutOfDomain { r: f64, r_max: f64 },

    #[error("empty sampling region")]
    EmptySamplingRegion,

    #[error("inner-no-convergence after {iters} iterations (best residual {residual:e})")]
    InnerNoConvergence { iters: usize, residual: f64 },

    #[error("line-search-stalled after {doublings} doublings (last M = {m:e}): {reason}")]
    LineSearchStalled { doublings: usize, m: f64, reason: String },

    #[error("malformed instance spec: {0}")]
    Spec(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}

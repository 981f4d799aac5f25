use thiserror::Error;

/// Errors produced by the numerical routines in this crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("metric positivity violated at node {node} (t = {t})")]
    NonPositiveMetric { node: usize, t: f64 },

    #[error("point t = {t} is too close to the grid boundary")]
    OutsideInterior { t: f64 },

    #[error("pole asymptotics are not conic (fit residual {residual:.3e})")]
    NonConicAsymptotics { residual: f64 },

    #[error("Newton iteration diverged after {iterations} iterations (residual {residual:.3e})")]
    NewtonDiverged { iterations: usize, residual: f64 },

    #[error("metric positivity lost during Newton iteration {iteration}")]
    PositivityLost { iteration: usize },

    #[error("continuation stalled at tau = {last_tau} (step below {min_step:.1e})")]
    PathStalled { last_tau: f64, min_step: f64 },

    #[error("singular linear system at row {row}")]
    SingularSystem { row: usize },

    #[error("trace has {len} steps, at least {required} are needed")]
    TraceTooShort { len: usize, required: usize },

    #[error("ball cover infeasible: sum of r^{exponent} is {sum:.3e} > 1")]
    CoverInfeasible { exponent: i32, sum: f64 },

    #[error("root finding failed: {0}")]
    RootNotFound(String),

    #[error("malformed input: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}

use thiserror::Error;

/// Errors raised by environment sampling, kernels, verifiers and experiments.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("out of range: {0}")]
    Range(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    /// The averaged contraction factor is not below one.
    #[error("long-time contractivity violated: gamma_bar = {gamma_bar}")]
    ContractivityViolation { gamma_bar: f64 },

    #[error("model infeasible: {0}")]
    ModelInfeasible(String),

    /// Some drift factor gamma(y) is non-positive; the step size must shrink.
    #[error("step size too large: gamma({y}) = {gamma} <= 0")]
    StepTooLarge { y: f64, gamma: f64 },

    #[error("stability inconclusive: E[ln |||A-product|||] CI = [{ci_low}, {ci_high}]")]
    InconclusiveStability { ci_low: f64, ci_high: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("unsupported: {0}")]
    Unsupported(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error(
        "staffing infeasible: beta = {beta} >= sqrt(n) = {sqrt_n} gives a nonpositive arrival rate"
    )]
    StaffingInfeasible { beta: f64, sqrt_n: f64 },

    #[error("inconsistent initial condition: {0}")]
    InconsistentInit(String),

    #[error("raw path covers [0, {available}] but [0, {required}] is needed")]
    HorizonTooShort { available: f64, required: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("system has no stationary distribution: {0}")]
    NotErgodic(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

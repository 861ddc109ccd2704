use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid spin length: 2l = {0} (supported range is 1..=64)")]
    InvalidSpin(u32),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("matrix is not Hermitian (max deviation {0:.3e})")]
    NotHermitian(f64),

    #[error("density matrix trace is {0}, expected 1")]
    NotUnitTrace(f64),

    #[error("state is not physical: minimum eigenvalue {0:.3e}")]
    NonPhysicalState(f64),

    #[error("eigenvalue {value} is {distance:.3e} away from the nearest admissible m")]
    EigenvalueMismatch { value: f64, distance: f64 },

    #[error("order {order} out of range (maximum {max})")]
    OrderOutOfRange { order: usize, max: usize },

    #[error("{got} measurement directions supplied, at least {needed} required")]
    InsufficientDirections { got: usize, needed: usize },

    #[error("{got} joint settings supplied, at least {needed} required")]
    InsufficientSettings { got: usize, needed: usize },

    #[error("design matrix is ill-conditioned (condition number {0:.3e})")]
    IllConditioned(f64),

    #[error("incomplete record: {0}")]
    IncompleteRecord(String),

    #[error("record directions do not match the five-direction spin-1 protocol")]
    WrongDirections,

    #[error("integration step too large: {0}")]
    StepTooLarge(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("unknown strategy '{0}'")]
    UnknownStrategy(String),

    #[error("internal error: {0}")]
    Internal(String),
}

impl Error {
    /// Short machine-readable tag, used by the CLI error objects.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidSpin(_) => "InvalidSpin",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::NotHermitian(_) => "NotHermitian",
            Error::NotUnitTrace(_) => "NotUnitTrace",
            Error::NonPhysicalState(_) => "NonPhysicalState",
            Error::EigenvalueMismatch { .. } => "EigenvalueMismatch",
            Error::OrderOutOfRange { .. } => "OrderOutOfRange",
            Error::InsufficientDirections { .. } => "InsufficientDirections",
            Error::InsufficientSettings { .. } => "InsufficientSettings",
            Error::IllConditioned(_) => "IllConditioned",
            Error::IncompleteRecord(_) => "IncompleteRecord",
            Error::WrongDirections => "WrongDirections",
            Error::StepTooLarge(_) => "StepTooLarge",
            Error::InvalidInput(_) => "InvalidInput",
            Error::UnknownStrategy(_) => "UnknownStrategy",
            Error::Internal(_) => "Internal",
        }
    }

    /// Numerical failures (as opposed to malformed input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::IllConditioned(_)
                | Error::StepTooLarge(_)
                | Error::EigenvalueMismatch { .. }
                | Error::NonPhysicalState(_)
                | Error::Internal(_)
        )
    }
}

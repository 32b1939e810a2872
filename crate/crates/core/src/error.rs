use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("vector must have at least one entry")]
    EmptyVector,
    #[error("entry {index} is negative ({value})")]
    NegativeEntry { index: usize, value: f64 },
    #[error("entries sum to zero")]
    ZeroSum,
    #[error("entry {index} is not finite")]
    NonFiniteEntry { index: usize },
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("invalid objective: {0}")]
    InvalidObjective(String),
    #[error("objective contains a hard barrier and has no gradient")]
    NonDifferentiableObjective,
    #[error("sampling probability must be positive, got {0}")]
    ZeroProbability(f64),
    #[error("arm {arm} out of range for {arms} arms")]
    ArmOutOfRange { arm: usize, arms: usize },
    #[error("smoothing parameter must lie in (0, 1], got {0}")]
    InvalidEpsilon(f64),
    #[error("gradient has a non-finite entry at {index}")]
    NonFiniteGradient { index: usize },
    #[error("invalid weight at {index}: weights must be positive and finite")]
    InvalidWeight { index: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("environment failure: {0}")]
    EnvironmentFailure(String),
    #[error("objective gap {gap} between probabilistic and single-best optima is degenerate")]
    DegenerateGap { gap: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected,
            found,
        })
    }
}

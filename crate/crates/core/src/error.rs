use thiserror::Error;

/// Errors raised by the p-adic heat kernel library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{0} is not a supported prime")]
    NotPrime(u64),

    #[error("prime mismatch: {0} vs {1}")]
    PrimeMismatch(u64, u64),

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("enumeration of {requested} points exceeds the resource cap of {cap}")]
    ResourceCap { requested: u128, cap: u64 },

    #[error("invalid digit string `{input}`: {reason}")]
    DigitString { input: String, reason: String },

    #[error("invalid polynomial: {0}")]
    Polynomial(String),

    #[error("time must be positive and finite, got {0}")]
    NonPositiveTime(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("tolerance {requested:e} is unreachable (best achievable {achievable:e})")]
    ToleranceUnreachable { requested: f64, achievable: f64 },

    #[error("operation is undefined at the zero vector")]
    ZeroVector,

    #[error("symbol is not certified elliptic: {0}")]
    NotCertified(String),

    #[error("negative ball mass {mass:e} exceeds receipt tolerance {bound:e}")]
    NegativeMass { mass: f64, bound: f64 },

    #[error("outer mass deficiency {deficiency:e} exceeds budget {budget:e}")]
    OuterDeficiency { deficiency: f64, budget: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

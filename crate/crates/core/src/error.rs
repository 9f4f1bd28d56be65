use thiserror::Error;

/// Errors raised by the estimation pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("transfer function vanishes (|M| = {modulus:e}) at u = {u}")]
    DegenerateTransfer { u: f64, modulus: f64 },

    #[error("insufficient data: need at least {needed} observations, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("all design points coincide")]
    DegenerateDesign,

    #[error("group {0} is empty after classification")]
    EmptyGroup(u8),

    #[error("non-finite contrast value at {0}")]
    NonFiniteContrast(String),

    #[error("design density at x0 is {0:e}, too small to invert")]
    VanishingDesignDensity(f64),

    #[error("inversion window too narrow: edge modulus ratio {0:e}")]
    InversionWindowTooNarrow(f64),

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
}

impl Error {
    /// Whether the error stems from numerics rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::DegenerateTransfer { .. }
                | Error::DegenerateDesign
                | Error::EmptyGroup(_)
                | Error::NonFiniteContrast(_)
                | Error::VanishingDesignDensity(_)
                | Error::InversionWindowTooNarrow(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, DbiError>;

#[derive(Debug, Error)]
pub enum DbiError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("mask is empty")]
    EmptyMask,

    #[error("solver did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("target density {target} unreachable: at most {reachable} attainable")]
    InfeasibleDensity { target: f64, reachable: f64 },

    #[error("problem size {size} exceeds cap {cap}")]
    SizeCap { size: usize, cap: usize },

    #[error("malformed image file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl DbiError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        DbiError::InvalidParameter(msg.into())
    }

    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            DbiError::NoConvergence { .. } | DbiError::InfeasibleDensity { .. } | DbiError::EmptyMask
        )
    }
}

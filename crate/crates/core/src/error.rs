use std::fmt;

use thiserror::Error;

/// Record of a truncated-region integral that kept growing under doubling.
#[derive(Debug, Clone, PartialEq)]
pub struct DivergenceReport {
    pub context: String,
    /// `(half_width, estimate)` for each region that was integrated.
    pub history: Vec<(f64, f64)>,
}

impl fmt::Display for DivergenceReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: estimates", self.context)?;
        for (r, v) in &self.history {
            write!(f, " [R={r:.3e}: {v:.6e}]")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("lambda_star mass at X^0 is infinite")]
    VacuousCluster,
    #[error("divergent integral ({0})")]
    Divergent(DivergenceReport),
    #[error("point is not an atom of the configuration")]
    NotAnAtom,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("model mismatch: {0}")]
    ModelMismatch(String),
    #[error("observation window does not cover the support of the test function")]
    WindowTooSmall,
    #[error("time step rejected after {0} halvings")]
    StepRejected(u32),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}

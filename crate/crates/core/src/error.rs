use thiserror::Error;

/// Errors produced by the simulator and analysis routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("time grid is not strictly increasing at index {index}")]
    NonMonotoneGrid { index: usize },

    #[error("query interval [{t0}, {t1}] lies outside the trajectory span [{start}, {end}]")]
    OutOfSpan { t0: f64, t1: f64, start: f64, end: f64 },

    #[error("quadrature did not converge: estimate {estimate:e}, error estimate {error:e}")]
    Quadrature { estimate: f64, error: f64 },

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("{0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

pub(crate) fn ensure_finite(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(invalid(name, format!("must be finite, got {value}")))
    }
}

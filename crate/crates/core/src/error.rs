use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("non-finite value at step {step}, state {state:?}")]
    NonFinite { step: usize, state: Vec<f64> },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("explicit scheme unstable: dt = {dt} exceeds bound {bound}")]
    Stability { dt: f64, bound: f64 },

    #[error("numerical degeneracy: {0}")]
    Degenerate(String),

    #[error("smearing width {width} is below the resolution bound {bound}")]
    Resolution { width: f64, bound: f64 },

    #[error("time grids do not match")]
    GridMismatch,

    #[error("dense representation of {sites} sites exceeds the limit of {limit}")]
    TooLarge { sites: usize, limit: usize },

    #[error("spectral weight {weight:e} near the grid cutoff; wavefunction is not band-limited")]
    Aliasing { weight: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name: name.to_string(),
        reason: reason.into(),
    }
}

pub(crate) fn require_positive(name: &str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(invalid(name, format!("must be finite and > 0, got {value}")))
    }
}

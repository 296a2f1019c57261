use std::fmt;

use crate::ode::OdeError;

/// Errors raised by the model, the integrators and the experiment layer.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("alpha = {0} lies outside [-1, 1]")]
    AlphaOutOfRange(f64),

    #[error("spinor is not normalized: |norm^2 - 1| = {0:e}")]
    NotNormalized(f64),

    #[error("pole proximity: |alpha| = {alpha} too close to 1")]
    PoleProximity { alpha: f64 },

    #[error("integration failed: {0}")]
    Integration(#[from] OdeError),

    #[error("no oscillation detected: {0}")]
    NoOscillation(String),

    #[error("sample grids do not match: {0}")]
    GridMismatch(String),

    #[error("observable is not Hermitian (deviation {0:e})")]
    NonHermitian(f64),

    #[error("variance expectation {0:e} is negative beyond round-off slack")]
    NegativeVariance(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid {field}: {msg}")]
    Config { field: &'static str, msg: String },

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

/// An aborted integration: the diagnostic plus everything sampled before the abort.
#[derive(Debug, Clone)]
pub struct IntegrationFailure<T> {
    pub diagnostic: OdeError,
    pub partial: T,
}

impl<T> fmt::Display for IntegrationFailure<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (partial result retained)", self.diagnostic)
    }
}

impl<T: fmt::Debug> std::error::Error for IntegrationFailure<T> {}

impl<T> From<IntegrationFailure<T>> for Error {
    fn from(failure: IntegrationFailure<T>) -> Self {
        Error::Integration(failure.diagnostic)
    }
}

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch: {left} modes vs {right} modes")]
    GridMismatch { left: usize, right: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("field is identically zero")]
    ZeroField,

    /// Picard iteration on the Duhamel map did not reach the tolerance.
    #[error("Picard iteration did not converge at t = {time} after {iterations} iterations (last update {residual:e})")]
    NonConvergence {
        time: f64,
        iterations: usize,
        residual: f64,
    },

    #[error("non-finite coefficient encountered at t = {time}")]
    NonFinite { time: f64 },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    /// True for failures raised by a time stepper.
    pub fn is_solver_error(&self) -> bool {
        matches!(self, Error::NonConvergence { .. } | Error::NonFinite { .. })
    }
}

use thiserror::Error;

/// Errors raised by the mining pipeline and its simulator.
#[derive(Debug, Error)]
pub enum Error {
    /// A configuration is internally inconsistent (dimension mismatch,
    /// empty category set, infeasible ranges).
    #[error("configuration error: {0}")]
    Config(String),

    /// A scalar argument is outside its admissible range.
    #[error("validation error: {0}")]
    Validation(String),

    /// A caller broke an operation's precondition (misaligned inputs,
    /// wrong box origin).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("invalid box [{x1}, {y1}, {x2}, {y2}]")]
    InvalidBox { x1: f64, y1: f64, x2: f64, y2: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_unit(name: &str, value: f64) -> Result<()> {
    if value.is_finite() && (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::Validation(format!("{name} must lie in [0, 1], got {value}")))
    }
}

use thiserror::Error;

/// Errors raised by the simulator and analysis routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("non-finite value in mean-field integration at t = {t} ps")]
    NonFinite { t: f64 },

    #[error("positivity lost at t = {t} ps: minimum eigenvalue {min_eigenvalue:e}")]
    PositivityLoss { t: f64, min_eigenvalue: f64 },

    #[error("Fock truncation overflow at t = {t} ps: top-level population {population:e}")]
    TruncationOverflow { t: f64, population: f64 },

    #[error("no checkpoint at or before t = {t} ps")]
    CheckpointMissing { t: f64 },

    #[error("two-time propagation diverged at t = {t} ps")]
    PropagationDiverged { t: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("instrument grid too coarse: spacing {dt} ps exceeds sigma/2 = {limit} ps")]
    GridTooCoarse { dt: f64, limit: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

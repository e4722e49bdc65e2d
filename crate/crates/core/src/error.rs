//! Error type shared by every module in the crate.

use num_complex::Complex64;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An argument violates a documented precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A computed quantity overflowed or otherwise left the representable
    /// range; `index` names the offending gain/output (1-based).
    #[error("range error at index {index}: {detail}")]
    Range { index: usize, detail: String },

    /// Observer state stopped being finite during integration.
    #[error("divergence at t = {t}: {detail}")]
    Divergence { t: f64, detail: String },

    /// A delayed-sample query landed before the earliest buffered sample.
    #[error("buffer underflow: query at t = {t} precedes earliest sample at t = {earliest}")]
    BufferUnderflow { t: f64, earliest: f64 },

    /// Transfer-function evaluation too close to a pole of the closed loop.
    #[error("pole proximity at s = {s}: |denominator| = {magnitude:e}")]
    PoleProximity { s: Complex64, magnitude: f64 },

    /// Step size incompatible with the peak gain rate of the schedule.
    #[error("unstable step: dt * max(1/eps) = {product} exceeds {limit}")]
    UnstableStep { product: f64, limit: f64 },

    /// A scenario field is present but unusable.
    #[error("config error in `{field}`: {detail}")]
    Config { field: String, detail: String },

    /// Degenerate analysis input, e.g. a regression with zero variance.
    #[error("analysis error: {0}")]
    Analysis(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable tag, stable across message rewording.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "invalid_input",
            Error::Range { .. } => "range",
            Error::Divergence { .. } => "divergence",
            Error::BufferUnderflow { .. } => "buffer_underflow",
            Error::PoleProximity { .. } => "pole_proximity",
            Error::UnstableStep { .. } => "unstable_step",
            Error::Config { .. } => "config",
            Error::Analysis(_) => "analysis",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid field: {0}")]
    InvalidField(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("grid mismatch between operands")]
    GridMismatch,

    #[error(
        "kernel under-resolved: effective width {width:.3e} spans fewer than 4 grid spacings (h = {spacing:.3e})"
    )]
    UnderresolvedKernel { width: f64, spacing: f64 },

    #[error("kernel is not radially symmetric (largest odd moment {0:.3e})")]
    NotSymmetric(f64),

    #[error("kernel is not compactly supported; only p = 2 is available for it")]
    NonCompactKernel,

    #[error("stability violation at t = {time}: sup norm grew from {before:.6e} to {after:.6e}")]
    StabilityViolation { time: f64, before: f64, after: f64 },

    #[error("domain overflow at t = {time}: mass {tail:.3e} beyond |x| = {radius} exceeds {tol:.1e}")]
    DomainOverflow {
        time: f64,
        radius: f64,
        tail: f64,
        tol: f64,
    },

    #[error("insufficient samples: {found} in fit window, need at least {needed}")]
    InsufficientSamples { found: usize, needed: usize },

    #[error("time tag mismatch: {left} vs {right}")]
    TimeTagMismatch { left: f64, right: f64 },

    #[error("unsupported profile: {0}")]
    UnsupportedProfile(String),

    #[error("profile cross-check failed: L1 distance {distance:.3e} exceeds {tol:.1e}")]
    ProfileCrossCheck { distance: f64, tol: f64 },

    #[error("config key `{key}`: {msg}")]
    Config { key: String, msg: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, LabError>;

impl LabError {
    pub fn config(key: impl Into<String>, msg: impl Into<String>) -> Self {
        LabError::Config {
            key: key.into(),
            msg: msg.into(),
        }
    }
}

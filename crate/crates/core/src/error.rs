use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("format error in {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("inconsistent data: {0}")]
    InconsistentData(String),

    #[error("capability error: {0}")]
    Capability(String),

    #[error("trajectory diverged at step {step}: |theta|_inf = {norm:e} exceeds {bound:e}")]
    Diverged { step: u64, norm: f64, bound: f64 },

    #[error("oracle limit: {0}")]
    OracleLimit(String),

    #[error("not a minimum: Hessian eigenvalue {eigenvalue:e} is not positive")]
    NotAMinimum { eigenvalue: f64 },

    #[error("no minimum found after {iterations} iterations (gradient norm {grad_norm:e})")]
    NoMinimum { iterations: usize, grad_norm: f64 },

    #[error("diffusion correction too large: fixed-point iteration diverged (ratio {ratio:e})")]
    CorrectionTooLarge { ratio: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("config validation failed: {0}")]
    Validation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

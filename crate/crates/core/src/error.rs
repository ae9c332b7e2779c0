use thiserror::Error;

/// Errors surfaced by every module of the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameters: {0}")]
    Params(String),

    #[error("box radius {radius} needs n > {}, got n = {n}", 2 * radius + 1)]
    BoxTooLarge { radius: usize, n: usize },

    #[error("size guard: {0}")]
    Size(String),

    #[error("Fourier cutoff {cutoff} must be < n/2 (n = {n})")]
    Cutoff { cutoff: usize, n: usize },

    #[error("internal inconsistency: {0}")]
    Inconsistent(String),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("stability violation: {0}")]
    Stability(String),

    #[error("snapshot format: {0}")]
    Format(String),

    #[error("config: {0}")]
    Config(String),

    #[error("insufficient samples: {0}")]
    Insufficient(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

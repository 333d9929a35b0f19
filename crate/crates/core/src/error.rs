use thiserror::Error;

/// Errors surfaced by the library. `Config` covers invalid parameters and
/// malformed run configurations; everything else is a data/runtime problem.
#[derive(Debug, Error)]
pub enum SvError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid probability distribution: {0}")]
    InvalidDist(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, SvError>;

//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration (bad grammar bounds, odd head dims, unknown keys, ...).
    #[error("config error: {0}")]
    Config(String),

    /// Incompatible tensor/sequence shapes.
    #[error("shape error: {0}")]
    Shape(String),

    /// A program does not fit the requested frame budget.
    #[error("render error: {0}")]
    Render(String),

    /// Non-finite activations surfaced during a network pass.
    #[error("numeric error in {location}: {detail}")]
    Numeric { location: String, detail: String },

    /// Token indices outside the codebook range.
    #[error("corrupt token data: {0}")]
    Corrupt(String),

    /// Checkpoint or corpus file is malformed.
    #[error("file format error: {0}")]
    Format(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
    pub fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }
}

//! Error types shared across the crate.

use thiserror::Error;

/// Unified error type for all fallible operations.
#[derive(Error, Debug)]
pub enum Error {
    /// Tensor or matrix shapes do not line up.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// An index (unit, batch, label, ...) is out of range.
    #[error("index error: {0}")]
    Index(String),

    /// API misuse: wrong tape, cross-instance handle, backward before run, ...
    #[error("usage error: {0}")]
    Usage(String),

    /// Topology extraction or validation failed.
    #[error("graph error: {0}")]
    Graph(String),

    /// Backend resource limits exceeded (neurons, fan-in) in strict mode.
    #[error("resource error: {0}")]
    Resource(String),

    /// Weight outside the representable hardware range.
    #[error("quantization error: {0}")]
    Quantization(String),

    /// Observable data is missing or inconsistent.
    #[error("data error: {0}")]
    Data(String),

    /// Invalid parameter value.
    #[error("parameter error: {0}")]
    Parameter(String),

    /// Configuration file rejected.
    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

/// Error type shared by every module in the crate.
#[derive(Debug, Error)]
pub enum CoreError {
    /// Invalid configuration: bad layer geometry, infeasible factor grid, etc.
    #[error("configuration error: {0}")]
    Config(String),

    /// Tensor or matrix shape disagreement.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Operation called in the wrong order (e.g. backward before forward).
    #[error("state error: {0}")]
    State(String),

    /// Non-finite values or other numeric breakdown.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// Bad or inconsistent data supplied by a caller or a file.
    #[error("data error: {0}")]
    Data(String),

    /// Malformed container or manifest content.
    #[error("format error: {0}")]
    Format(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CoreError {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        CoreError::Io { path: path.into(), source }
    }
}

pub type Result<T> = std::result::Result<T, CoreError>;

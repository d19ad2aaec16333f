use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate input: {0}")]
    Degenerate(&'static str),

    #[error("direction below the hemisphere of the normal (cos = {cos:.3e})")]
    Hemisphere { cos: f64 },

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("parameter arity mismatch for {model}: expected {expected}, got {got}")]
    Arity {
        model: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("stale tape: {0}")]
    StaleTape(&'static str),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("mesh error: {0}")]
    Mesh(String),

    #[error("eigensolver budget exceeded: {vertices} vertices > {budget}")]
    Budget { vertices: usize, budget: usize },

    #[error("format error: {0}")]
    Format(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("insufficient data: {0}")]
    Insufficient(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code used by the CLI: 2 for data errors, 3 for numeric failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Numeric(_) => 3,
            Error::Config(_) => 1,
            _ => 2,
        }
    }
}

use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the codec pipeline.
#[derive(Debug, Error)]
pub enum CodecError {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("invalid code: {0}")]
    InvalidCode(String),

    #[error("invalid token {token} for {bits}-bit codebook")]
    InvalidToken { token: u64, bits: u32 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("truncated input: {0}")]
    Truncated(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CodecError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CodecError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for this error class (2 bad arguments, 3 I/O, 4 format/shape).
    pub fn exit_code(&self) -> i32 {
        match self {
            CodecError::Io { .. } => 3,
            _ => 4,
        }
    }
}

pub type Result<T, E = CodecError> = std::result::Result<T, E>;

use thiserror::Error;

/// Errors produced by the gesture pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("frame {frame}: expected {expected} values, got {got}")]
    Frame {
        frame: usize,
        expected: usize,
        got: usize,
    },
    #[error("motion has no frames")]
    EmptyMotion,
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("topology error: {0}")]
    Topology(String),
    #[error("classification error: {0}")]
    Classification(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("dependency error: stage `{stage}` requires `{missing}` to run first")]
    Dependency { stage: String, missing: String },
    #[error("checkpoint format error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }
    pub fn topology(msg: impl Into<String>) -> Self {
        Error::Topology(msg.into())
    }
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}

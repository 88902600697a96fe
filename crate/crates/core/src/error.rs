use thiserror::Error;

/// Errors raised anywhere in the prompt-learning pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("input error: {0}")]
    Input(String),

    #[error("unknown token `{0}`")]
    Vocabulary(String),

    #[error("index {index} out of range for length {len}")]
    Index { index: usize, len: usize },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("labels are not available: {0}")]
    LabelAccess(String),

    #[error("training diverged at epoch {epoch}, step {step}: {msg}")]
    Divergence { epoch: usize, step: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn input_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Input(msg.into()))
}

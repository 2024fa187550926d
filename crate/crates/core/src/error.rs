use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid UTF-8 at byte offset {offset}")]
    Decode { offset: usize },

    #[error("corpus is empty")]
    EmptyCorpus,

    #[error("range error: {0}")]
    Range(String),

    #[error("power-law fit failed: {0}")]
    Fit(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("byte accounting overflow in {0}")]
    Accounting(String),

    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("index {id} out of range for vocabulary of size {vocab_size}")]
    Index { id: u32, vocab_size: usize },

    #[error("consistency error: {0}")]
    Consistency(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("codec error: {0}")]
    Codec(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("I/O error on {path}: {message}")]
    Io { path: String, message: String },
}

impl Error {
    pub fn io(path: impl AsRef<std::path::Path>, err: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            message: err.to_string(),
        }
    }
}

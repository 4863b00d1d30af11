use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("lookup error: field `{field}` index {index} out of range (vocab size {vocab})")]
    Lookup {
        field: String,
        index: usize,
        vocab: usize,
    },
    #[error("parse error at row {row}: {msg}")]
    Parse { row: usize, msg: String },
    #[error("dataset error: {0}")]
    Dataset(String),
    #[error("encode error: {0}")]
    Encode(String),
    #[error("split error: {0}")]
    Split(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for the CLI: 1 config/usage, 2 data, 3 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Argument(_) => 1,
            Error::Parse { .. }
            | Error::Dataset(_)
            | Error::Split(_)
            | Error::Encode(_)
            | Error::Checkpoint(_)
            | Error::Io(_) => 2,
            Error::Shape(_) | Error::Numeric(_) | Error::Lookup { .. } => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

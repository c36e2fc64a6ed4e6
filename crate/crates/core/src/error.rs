use thiserror::Error;

/// Errors produced anywhere in the simulator.
#[derive(Debug, Error)]
pub enum FedError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite value encountered: {0}")]
    NumericDomain(String),
    #[error("index out of range: {0}")]
    Index(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("prototype mismatch: expected `{expected}`, found `{found}`")]
    PrototypeMismatch { expected: String, found: String },
    #[error("empty dataset: {0}")]
    EmptyDataset(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("malformed input: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, FedError>;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("graph error: {0}")]
    Graph(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },

    #[error("zero vector under cosine similarity")]
    ZeroVector,

    #[error("unknown class {0:?}")]
    UnknownClass(String),

    #[error("class {0:?} has no support examples")]
    EmptySupport(String),

    #[error("non-finite loss at iteration {0}")]
    Divergence(usize),

    #[error("insufficient examples: {0}")]
    Insufficient(String),

    #[error("episode seed mismatch between paired result lists")]
    SeedMismatch,

    #[error("{0}")]
    Stats(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

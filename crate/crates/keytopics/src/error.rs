use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// Malformed input file content (JSON/CSV), with a 1-based line number.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// Input violates the documented file schema or a corpus invariant.
    #[error("schema error: {0}")]
    Schema(String),

    /// Invalid run configuration (bad flag combinations, impossible settings).
    #[error("config error: {0}")]
    Config(String),

    /// The sampler hit a numerically impossible state (all-zero conditional,
    /// non-finite density, runaway slice bracket).
    #[error("sampler fault: {0}")]
    Fault(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn schema(msg: impl Into<String>) -> Self {
        Error::Schema(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn fault(msg: impl Into<String>) -> Self {
        Error::Fault(msg.into())
    }
}

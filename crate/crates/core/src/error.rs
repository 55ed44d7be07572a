use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A distribution or operation was handed a parameter outside its domain.
    #[error("parameter out of domain: {0}")]
    Domain(String),

    /// A conditional became degenerate during sampling, e.g. a zero
    /// normalizer facing a positive count. Coordinates are 1-based
    /// (layer, time, factor) to match how the model is usually written.
    #[error("numeric degeneracy at layer {layer}, t {t}, k {k}: {what}")]
    Degenerate {
        layer: usize,
        t: usize,
        k: usize,
        what: &'static str,
    },

    #[error("index out of range: {0}")]
    Index(String),

    #[error("dimension mismatch: {0}")]
    Shape(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("incompatible checkpoint format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            msg: msg.into(),
        }
    }
}

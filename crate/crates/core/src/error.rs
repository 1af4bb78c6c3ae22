use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    Dimension {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("token index {index} out of range for vocabulary of size {size}")]
    Vocabulary { index: usize, size: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },

    #[error("clip has no frames")]
    EmptyClip,

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("join error: {0}")]
    Join(String),

    #[error("format error at byte {offset}: {message}")]
    Format { offset: usize, message: String },

    #[error("training diverged at epoch {epoch}, batch {batch}")]
    Divergence { epoch: usize, batch: usize },

    #[error("usage: {0}")]
    Usage(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn dims(op: &'static str, left: &[usize], right: &[usize]) -> Self {
        Error::Dimension {
            op,
            left: left.to_vec(),
            right: right.to_vec(),
        }
    }

    /// Short machine-parsable category, used by the CLI.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Dimension { .. } | Error::Schema(_) | Error::EmptyClip => "schema",
            Error::Contract(_) | Error::Domain(_) | Error::NonFinite { .. } => "contract",
            Error::Vocabulary { .. } => "vocabulary",
            Error::Parse { .. } | Error::Format { .. } => "format",
            Error::Join(_) => "data",
            Error::Divergence { .. } => "divergence",
            Error::Usage(_) => "usage",
            Error::Io(_) => "io",
        }
    }

    /// Process exit code: 2 usage, 3 I/O, 4 schema/format, 5 divergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) => 2,
            Error::Io(_) => 3,
            Error::Divergence { .. } => 5,
            _ => 4,
        }
    }
}

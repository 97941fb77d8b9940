use std::path::PathBuf;

use crate::tensor::Shape;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid shape {0:?}: every dimension must be at least 1")]
    InvalidShape([usize; 4]),

    #[error("expected {expected} values for shape {shape}, got {actual}")]
    LengthMismatch {
        shape: Shape,
        expected: usize,
        actual: usize,
    },

    #[error("{op}: shape mismatch ({left} vs {right})")]
    ShapeMismatch {
        op: &'static str,
        left: Shape,
        right: Shape,
    },

    #[error("{op}: expected {expected} input channels, got {actual}")]
    ChannelMismatch {
        op: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("{op}: {msg}")]
    InvalidArgument { op: &'static str, msg: String },

    #[error("ground truth contains non-binary value {value} at index {index}")]
    NonBinary { index: usize, value: f64 },

    #[error("{path}: {msg}")]
    Parse { path: PathBuf, msg: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("checkpoint {path}: bad magic header")]
    BadMagic { path: PathBuf },

    #[error("checkpoint {path}: unsupported version {found} (expected {expected})")]
    VersionMismatch {
        path: PathBuf,
        found: u32,
        expected: u32,
    },

    #[error("checkpoint {path}: stored precision {found:?} does not match requested {expected:?}")]
    PrecisionMismatch {
        path: PathBuf,
        found: crate::tensor::Precision,
        expected: crate::tensor::Precision,
    },

    #[error("checkpoint {path}: CRC mismatch (stored {stored:#010x}, computed {computed:#010x})")]
    CrcMismatch {
        path: PathBuf,
        stored: u32,
        computed: u32,
    },

    #[error("checkpoint {path}: truncated or malformed ({msg})")]
    Malformed { path: PathBuf, msg: String },

    #[error("checkpoint is missing parameter `{0}`")]
    MissingParameter(String),

    #[error("checkpoint has unexpected parameter `{0}`")]
    UnexpectedParameter(String),

    #[error("parameter `{name}` has shape {expected:?} in the graph but {found:?} in the checkpoint")]
    ParameterShape {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    #[error("no gradient for parameter `{0}`")]
    MissingGradient(String),

    #[error("config: {0}")]
    Config(String),

    #[error("non-finite loss at iteration {iteration}; last good state saved to {snapshot}")]
    NonFiniteLoss { iteration: u64, snapshot: PathBuf },

    #[error("empty dataset")]
    EmptyDataset,
}

impl Error {
    pub(crate) fn invalid(op: &'static str, msg: impl Into<String>) -> Self {
        Error::InvalidArgument {
            op,
            msg: msg.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

use thiserror::Error;

/// Errors raised across the pipeline.
#[derive(Debug, Error)]
pub enum MsnnError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("channel '{0}' has zero variance")]
    ZeroVariance(String),

    #[error("batch norm running statistics are not initialised; run a training-mode update first")]
    BatchNormUninitialized,

    #[error("gradient tape already consumed")]
    TapeConsumed,

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Diverged { epoch: usize },

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("unsupported format version {found} (expected {expected})")]
    Version { expected: u16, found: u16 },

    #[error("file is truncated: {0}")]
    Truncated(String),

    #[error("checksum mismatch: stored {stored:08x}, computed {computed:08x}")]
    Checksum { stored: u32, computed: u32 },

    #[error("missing parameter section")]
    MissingParameters,

    #[error("invalid file contents: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, MsnnError>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(MsnnError::InvalidArgument(msg.into()))
}

pub(crate) fn shape_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(MsnnError::Shape(msg.into()))
}

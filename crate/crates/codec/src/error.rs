use thiserror::Error;

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("bitstream has bad magic")]
    BadMagic,
    #[error("unsupported bitstream version {0}")]
    UnsupportedVersion(u8),
    #[error("bitstream truncated at byte {offset}")]
    Truncated { offset: usize },
    #[error("model hash mismatch: stream {stream:#018x}, checkpoint {checkpoint:#018x}")]
    HashMismatch { stream: u64, checkpoint: u64 },
    #[error("stream/model mismatch: {0}")]
    ModelMismatch(String),
    #[error("data format error: {0}")]
    DataFormat(String),
    #[error("internal error: {0}")]
    Internal(String),
    #[error(transparent)]
    Tensor(#[from] gmsd_tensor::TensorError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = CodecError> = std::result::Result<T, E>;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("input error: {0}")]
    Input(String),
    #[error(transparent)]
    Codec(#[from] gmsd_codec::CodecError),
    #[error(transparent)]
    Tensor(#[from] gmsd_tensor::TensorError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = EvalError> = std::result::Result<T, E>;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("shape {shape:?} implies {expected} elements, data has {got}")]
    ShapeDataMismatch {
        shape: Vec<usize>,
        expected: usize,
        got: usize,
    },
    #[error("expected rank {expected}, got shape {shape:?}")]
    Rank { expected: usize, shape: Vec<usize> },
    #[error("shape mismatch: {left:?} vs {right:?}")]
    ShapeMismatch { left: Vec<usize>, right: Vec<usize> },
    #[error("kernel expects {expected} input channels, input has {got}")]
    ChannelMismatch { expected: usize, got: usize },
    #[error("masked convolution requires an odd kernel extent, got {kh}x{kw}")]
    EvenKernel { kh: usize, kw: usize },
    #[error("convolution geometry invalid: input {h}x{w}, kernel {kh}x{kw}, stride {stride}, padding {pad}")]
    BadGeometry {
        h: usize,
        w: usize,
        kh: usize,
        kw: usize,
        stride: usize,
        pad: usize,
    },
    #[error("backward requires a scalar loss, got shape {shape:?}")]
    NotScalar { shape: Vec<usize> },
    #[error("cannot reshape {from:?} ({from_len} elements) into {to:?} ({to_len} elements)")]
    BadReshape {
        from: Vec<usize>,
        from_len: usize,
        to: Vec<usize>,
        to_len: usize,
    },
    #[error("duplicate parameter name {0:?}")]
    DuplicateName(String),
    #[error("unknown parameter name {0:?}")]
    UnknownName(String),
    #[error("checkpoint read failed: {0}")]
    CheckpointRead(String),
    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = TensorError> = std::result::Result<T, E>;

//! Dense tensors, reverse-mode autodiff, and the convolution kernels used
//! by the gmsd learned image codec.
//!
//! The crate is generic over the scalar type: `f32` for production runs,
//! `f64` for gradient checks and reference oracles. Kernels parallelize
//! with rayon when the `parallel` feature (default) is enabled; results
//! are bit-identical to the sequential fallback because every output
//! element has a fixed accumulation order.

pub mod adam;
pub mod element;
pub mod error;
pub mod gradcheck;
pub mod init;
pub mod kernels;
pub mod ops;
pub mod params;
pub mod tape;
pub mod tensor;

pub use adam::{AdamConfig, AdamState, DEFAULT_LR};
pub use element::Element;
pub use error::{Result, TensorError};
pub use params::{fnv1a64, Checkpoint, CheckpointRecord, ParamId, ParamStore, Parameter};
pub use tape::{sigmoid, Activation, CustomOp, Gradients, MaskKind, Tape, TVar, LEAKY_SLOPE};
pub use tensor::{idx4, Tensor};

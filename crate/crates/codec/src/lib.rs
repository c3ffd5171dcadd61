//! gmsd codec core: entropy models, the hyperprior network with mixed or
//! separate decoder paths, the range coder, and the bitstream container.

pub mod bitstream;
pub mod codec;
pub mod config;
pub mod error;
pub mod factorized;
pub mod gmm;
pub mod image;
pub mod network;
pub mod pipeline;
pub mod pmf;
pub mod quantize;
pub mod rangecoder;

pub use bitstream::{StreamHeader, HEADER_LEN, STREAM_MAGIC, STREAM_VERSION};
pub use codec::{decode_image, encode_image, infer_gmm_params, padded_extent, Decoded, EncodeStats, Encoded};
pub use config::{hyper_decoder_channel_plan, ChannelPlan, DecoderMode, DistortionKind, ModelConfig};
pub use error::{CodecError, Result};
pub use factorized::FactorizedDensity;
pub use gmm::{
    assemble_gmm, discrete_gaussian_prob, gmm_likelihood, gmm_pmf_scalar, gmm_pmf_scalar_raw,
    normal_cdf, rate_bits_t, GmmParams, GmmVars, PROB_FLOOR, SIGMA_MAX, SIGMA_MIN,
};
pub use image::{reflect_pad_to_multiple, RasterImage};
pub use network::{hyper_hw, latent_hw, CodecModel, ModelVars, HYPER_DOWN, MAIN_DOWN};
pub use pipeline::{GmmPos, SerialPipeline};
pub use pmf::{gmm_alphabet_probs, PmfTable, ALPHABET_MAX, ALPHABET_MIN, PMF_PRECISION_BITS, PMF_TOTAL};
pub use quantize::{add_uniform_noise, quantize_round, quantize_symbols, rate_bits};
pub use rangecoder::{RangeDecoder, RangeEncoder};

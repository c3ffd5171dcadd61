//! Image encode/decode: quantize the latents, code the hyper-latents
//! under the factorized prior, then code the latents in raster order
//! under mixture parameters derived from already-coded symbols.

use gmsd_tensor::{Element, Tape, Tensor};

use crate::bitstream::{StreamHeader, HEADER_LEN};
use crate::error::{CodecError, Result};
use crate::gmm::{gmm_pmf_scalar, GmmParams};
use crate::network::{hyper_hw, latent_hw, CodecModel, MAIN_DOWN};
use crate::pipeline::{GmmPos, SerialPipeline};
use crate::pmf::{gmm_alphabet_probs, PmfTable, ALPHABET_MAX, ALPHABET_MIN};
use crate::quantize::quantize_symbols;
use crate::rangecoder::{RangeDecoder, RangeEncoder};

/// Pad an extent up to the codec's required multiple (64).
pub fn padded_extent(v: u32) -> usize {
    let unit = MAIN_DOWN * crate::network::HYPER_DOWN;
    (v as usize).div_ceil(unit) * unit
}

#[derive(Clone, Debug)]
pub struct EncodeStats {
    pub y_bits_actual: u64,
    pub z_bits_actual: u64,
    /// Model rate estimates: sum of -log2 p over the coded symbols.
    pub y_bits_estimate: f64,
    pub z_bits_estimate: f64,
    /// Symbols the alphabet clamp touched.
    pub clamped: usize,
    pub total_bytes: usize,
    /// Stream bits over original (pre-padding) pixels.
    pub bpp: f64,
}

pub struct Encoded<E: Element> {
    pub bytes: Vec<u8>,
    pub stats: EncodeStats,
    pub y_hat: Tensor<E>,
    pub z_hat: Tensor<E>,
    /// Encoder-side reconstruction, clamped to [0,1], padded dims.
    pub recon: Tensor<E>,
}

pub struct Decoded<E: Element> {
    pub header: StreamHeader,
    pub y_hat: Tensor<E>,
    pub z_hat: Tensor<E>,
    /// Reconstruction, clamped to [0,1], padded dims.
    pub recon: Tensor<E>,
}

fn symbols_to_tensor<E: Element>(symbols: &[i32], shape: Vec<usize>) -> Tensor<E> {
    Tensor::new(
        shape,
        symbols.iter().map(|&s| E::from_f64(s as f64)).collect(),
    )
    .expect("symbol count matches shape")
}

fn clamp01<E: Element>(t: &Tensor<E>) -> Tensor<E> {
    t.map(|v| {
        if v < E::zero() {
            E::zero()
        } else if v > E::one() {
            E::one()
        } else {
            v
        }
    })
}

/// Per-channel factorized alphabet probabilities with folded tails.
fn factorized_alphabet_probs<E: Element>(model: &CodecModel<E>, ch: usize) -> Vec<f64> {
    let span = (ALPHABET_MAX - ALPHABET_MIN + 1) as usize;
    let fac = model.factorized();
    let mut prev = fac.cumulative(&model.store, ch, ALPHABET_MIN as f64 - 0.5);
    let low_tail = prev;
    let mut probs = Vec::with_capacity(span);
    for i in 0..span {
        let edge = ALPHABET_MIN as f64 + i as f64 + 0.5;
        let next = fac.cumulative(&model.store, ch, edge);
        probs.push(next - prev);
        prev = next;
    }
    probs[0] += low_tail;
    let high = 1.0 - prev;
    probs[span - 1] += high.max(0.0);
    probs
}

/// Hyper features for all branches from quantized hyper-latents.
fn hyper_features<E: Element>(
    model: &CodecModel<E>,
    z_hat: &Tensor<E>,
    latent: (usize, usize),
) -> Vec<Tensor<E>> {
    let t: Tape<E> = Tape::new();
    let v = model.bind(&t);
    let zv = t.leaf(z_hat.clone());
    model
        .hyper_synthesis_all(&t, &v, zv, latent)
        .into_iter()
        .map(|var| t.value(var))
        .collect()
}

/// Run the analysis side and quantize: (y_hat, z_hat, clamp count).
fn forward_latents<E: Element>(
    model: &CodecModel<E>,
    x: &Tensor<E>,
) -> Result<(Tensor<E>, Tensor<E>, usize)> {
    let t: Tape<E> = Tape::new();
    let v = model.bind(&t);
    let xv = t.leaf(x.clone());
    let y = model.analysis(&t, &v, xv)?;
    let z = model.hyper_analysis(&t, &v, y);
    let y_val = t.value(y);
    let z_val = t.value(z);
    let (y_syms, y_clamped) = quantize_symbols(&y_val);
    let (z_syms, z_clamped) = quantize_symbols(&z_val);
    Ok((
        symbols_to_tensor(&y_syms, y_val.shape().to_vec()),
        symbols_to_tensor(&z_syms, z_val.shape().to_vec()),
        y_clamped + z_clamped,
    ))
}

/// Mixture parameters over the full latent grid at inference (plus the
/// quantized latents), for diagnostics.
pub fn infer_gmm_params<E: Element>(
    model: &CodecModel<E>,
    x: &Tensor<E>,
) -> Result<(GmmParams<E>, Tensor<E>)> {
    let (y_hat, z_hat, _) = forward_latents(model, x)?;
    let (_b, m, hy, wy) = y_hat.dims4().map_err(CodecError::Tensor)?;
    let feats = hyper_features(model, &z_hat, (hy, wy));
    let pipeline = SerialPipeline::new(model, &feats)?;
    let positions = pipeline.collect_full(&y_hat);
    let k = model.config.k;

    let mut weights = vec![Tensor::zeros(vec![1, m, hy, wy]); k];
    let mut means = vec![Tensor::zeros(vec![1, m, hy, wy]); k];
    let mut scales = vec![Tensor::zeros(vec![1, m, hy, wy]); k];
    for (pos_idx, pos) in positions.iter().enumerate() {
        let (py, px) = (pos_idx / wy, pos_idx % wy);
        for mi in 0..m {
            for ki in 0..k {
                let idx = (mi * hy + py) * wy + px;
                weights[ki].data_mut()[idx] = pos.weights[mi * k + ki];
                means[ki].data_mut()[idx] = pos.means[mi * k + ki];
                scales[ki].data_mut()[idx] = pos.scales[mi * k + ki];
            }
        }
    }
    Ok((GmmParams::new(weights, means, scales)?, y_hat))
}

pub fn encode_image<E: Element>(
    model: &CodecModel<E>,
    x: &Tensor<E>,
    orig_width: u32,
    orig_height: u32,
) -> Result<Encoded<E>> {
    let (_b, c, h, w) = x.dims4().map_err(CodecError::Tensor)?;
    if c != 3 {
        return Err(CodecError::Precondition(format!(
            "encoder expects 3 channels, got {c}"
        )));
    }
    if h != padded_extent(orig_height) || w != padded_extent(orig_width) {
        return Err(CodecError::Precondition(format!(
            "image dims {w}x{h} must be the original {orig_width}x{orig_height} padded to multiples of 64"
        )));
    }

    let (y_hat, z_hat, clamped) = forward_latents(model, x)?;
    let (_, m, hy, wy) = y_hat.dims4().map_err(CodecError::Tensor)?;
    let (_, n, hz, wz) = z_hat.dims4().map_err(CodecError::Tensor)?;
    debug_assert_eq!((hz, wz), hyper_hw(hy, wy));

    // hyper-latent segment: channel-major raster order, per-channel tables
    let mut z_enc = RangeEncoder::new();
    let mut z_bits_estimate = 0.0f64;
    for ch in 0..n {
        let probs = factorized_alphabet_probs(model, ch);
        let table = PmfTable::from_probs(ALPHABET_MIN, &probs)?;
        for pos in 0..hz * wz {
            let s = z_hat.data()[ch * hz * wz + pos].as_f64() as i32;
            z_enc.encode_symbol(s, &table)?;
            z_bits_estimate -= model
                .factorized()
                .pmf(&model.store, ch, s as i64)
                .log2();
        }
    }
    let z_segment = z_enc.finish();

    // latent segment: raster order over positions, channels inner; the
    // parameter pipeline sees only already-coded positions by masking
    let feats = hyper_features(model, &z_hat, (hy, wy));
    let pipeline = SerialPipeline::new(model, &feats)?;
    let k = model.config.k;
    let mut y_enc = RangeEncoder::new();
    let mut y_bits_estimate = 0.0f64;
    for py in 0..hy {
        for px in 0..wy {
            let pos: GmmPos<E> = pipeline.params_at(&y_hat, py, px);
            for mi in 0..m {
                let (wk, mk, sk) = pos.component_f64(mi, k);
                let probs = gmm_alphabet_probs(&wk, &mk, &sk);
                let table = PmfTable::from_probs(ALPHABET_MIN, &probs)?;
                let s = y_hat.data()[(mi * hy + py) * wy + px].as_f64() as i32;
                y_enc.encode_symbol(s, &table)?;
                y_bits_estimate -= gmm_pmf_scalar(s as f64, &wk, &mk, &sk).log2();
            }
        }
    }
    let y_segment = y_enc.finish();

    let header = StreamHeader {
        decoder_mode: model.config.decoder_mode,
        k: model.config.k as u8,
        n: model.config.n as u16,
        m: model.config.m as u16,
        orig_width,
        orig_height,
        model_hash: model.checkpoint_hash(),
        z_segment_len: z_segment.len() as u32,
    };
    let mut bytes = Vec::with_capacity(HEADER_LEN + z_segment.len() + y_segment.len());
    header.write(&mut bytes);
    bytes.extend_from_slice(&z_segment);
    bytes.extend_from_slice(&y_segment);

    // encoder-side reconstruction (identical to the decoder's)
    let recon = {
        let t: Tape<E> = Tape::new();
        let v = model.bind(&t);
        let yv = t.leaf(y_hat.clone());
        let xv = model.synthesis(&t, &v, yv);
        clamp01(&t.value(xv))
    };

    let stats = EncodeStats {
        y_bits_actual: y_segment.len() as u64 * 8,
        z_bits_actual: z_segment.len() as u64 * 8,
        y_bits_estimate,
        z_bits_estimate,
        clamped,
        total_bytes: bytes.len(),
        bpp: bytes.len() as f64 * 8.0 / (orig_width as f64 * orig_height as f64),
    };

    Ok(Encoded {
        bytes,
        stats,
        y_hat,
        z_hat,
        recon,
    })
}

pub fn decode_image<E: Element>(model: &CodecModel<E>, bytes: &[u8]) -> Result<Decoded<E>> {
    let header = StreamHeader::parse(bytes)?;
    let model_hash = model.checkpoint_hash();
    if header.model_hash != model_hash {
        return Err(CodecError::HashMismatch {
            stream: header.model_hash,
            checkpoint: model_hash,
        });
    }
    let cfg = &model.config;
    if header.decoder_mode != cfg.decoder_mode
        || header.k as usize != cfg.k
        || header.n as usize != cfg.n
        || header.m as usize != cfg.m
    {
        return Err(CodecError::ModelMismatch(format!(
            "stream built for mode={} n={} m={} k={}",
            header.decoder_mode, header.n, header.m, header.k
        )));
    }
    if header.orig_width == 0 || header.orig_height == 0 {
        return Err(CodecError::DataFormat("zero image dimensions".into()));
    }

    let z_len = header.z_segment_len as usize;
    let body = &bytes[HEADER_LEN..];
    if body.len() < z_len {
        return Err(CodecError::Truncated {
            offset: bytes.len(),
        });
    }
    let z_segment = &body[..z_len];
    let y_segment = &body[z_len..];

    let (hp, wp) = (
        padded_extent(header.orig_height),
        padded_extent(header.orig_width),
    );
    let (hy, wy) = latent_hw(hp, wp);
    let (hz, wz) = hyper_hw(hy, wy);
    let (n, m, k) = (cfg.n, cfg.m, cfg.k);

    // hyper-latents
    let mut z_dec = RangeDecoder::new(z_segment)?;
    let mut z_syms = Vec::with_capacity(n * hz * wz);
    for ch in 0..n {
        let probs = factorized_alphabet_probs(model, ch);
        let table = PmfTable::from_probs(ALPHABET_MIN, &probs)?;
        for _ in 0..hz * wz {
            z_syms.push(z_dec.decode_symbol(&table)?);
        }
    }
    let z_hat = symbols_to_tensor::<E>(&z_syms, vec![1, n, hz, wz]);

    // latents, autoregressive over raster positions
    let feats = hyper_features(model, &z_hat, (hy, wy));
    let pipeline = SerialPipeline::new(model, &feats)?;
    let mut y_dec = RangeDecoder::new(y_segment)?;
    let mut y_hat = Tensor::zeros(vec![1, m, hy, wy]);
    for py in 0..hy {
        for px in 0..wy {
            let pos = pipeline.params_at(&y_hat, py, px);
            for mi in 0..m {
                let (wk, mk, sk) = pos.component_f64(mi, k);
                let probs = gmm_alphabet_probs(&wk, &mk, &sk);
                let table = PmfTable::from_probs(ALPHABET_MIN, &probs)?;
                let s = y_dec.decode_symbol(&table)?;
                y_hat.data_mut()[(mi * hy + py) * wy + px] = E::from_f64(s as f64);
            }
        }
    }

    let recon = {
        let t: Tape<E> = Tape::new();
        let v = model.bind(&t);
        let yv = t.leaf(y_hat.clone());
        let xv = model.synthesis(&t, &v, yv);
        clamp01(&t.value(xv))
    };

    Ok(Decoded {
        header,
        y_hat,
        z_hat,
        recon,
    })
}

//! The Lagrangian rate-distortion loss.
//!
//! Training replaces quantization with additive U(-1/2, 1/2) noise on both
//! the latents and hyper-latents; the rate term is the per-pixel bit count
//! under the mixture/factorized models and the distortion term is scaled
//! so the reference lambda sets are meaningful: MSE enters as
//! lambda * 255^2 * mse, MS-SSIM as lambda * (1 - ms_ssim).

use gmsd_codec::{
    add_uniform_noise, gmm_likelihood, quantize_round, rate_bits_t, CodecModel, DistortionKind,
    ModelVars,
};
use gmsd_tensor::{Element, ParamId, Tape, TVar};
use rand_chacha::ChaCha8Rng;

use crate::distortion::distortion_t;
use crate::error::{Result, TrainError};

/// MSE enters the loss on the 8-bit scale.
pub const MSE_SCALE: f64 = 255.0 * 255.0;

#[derive(Clone, Copy, Debug)]
pub struct RdParts {
    pub loss: f64,
    pub rate_bits_total: f64,
    pub rate_bpp: f64,
    pub distortion: f64,
}

pub struct RdOutcome {
    /// Scalar loss variable on the tape (for backward).
    pub loss_var: TVar,
    pub parts: RdParts,
}

fn distortion_weight(kind: DistortionKind, lambda: f64) -> f64 {
    match kind {
        DistortionKind::Mse => lambda * MSE_SCALE,
        DistortionKind::MsSsim => lambda,
    }
}

fn assemble_loss<E: Element>(
    t: &Tape<E>,
    model: &CodecModel<E>,
    v: &ModelVars,
    x: TVar,
    y_code: TVar,
    z_code: TVar,
    lambda: f64,
    kind: DistortionKind,
) -> Result<RdOutcome> {
    let shape = t.shape(x);
    let num_pixels = (shape[0] * shape[2] * shape[3]) as f64;
    let y_shape = t.shape(y_code);
    let latent_hw = (y_shape[2], y_shape[3]);

    let feats = model.hyper_synthesis_all(t, v, z_code, latent_hw);
    let ctx = model.context(t, v, y_code);
    let params = model.entropy_params(t, v, ctx, &feats);
    let pmf_y = gmm_likelihood(t, y_code, &params);
    let rate_y = rate_bits_t(t, pmf_y);
    let by_id = |id: ParamId| v.var(id);
    let pmf_z = model.factorized().pmf_t(t, z_code, &by_id);
    let rate_z = rate_bits_t(t, pmf_z);

    let rate_total = t.add(rate_y, rate_z);
    let bpp = t.mul_scalar(rate_total, E::from_f64(1.0 / num_pixels));

    let x_rec = model.synthesis(t, v, y_code);
    let dist = distortion_t(t, x, x_rec, kind);
    let weighted = t.mul_scalar(dist, E::from_f64(distortion_weight(kind, lambda)));
    let loss = t.add(bpp, weighted);

    let parts = RdParts {
        loss: t.value(loss).item().as_f64(),
        rate_bits_total: t.value(rate_total).item().as_f64(),
        rate_bpp: t.value(bpp).item().as_f64(),
        distortion: t.value(dist).item().as_f64(),
    };
    Ok(RdOutcome {
        loss_var: loss,
        parts,
    })
}

/// Training loss on one batch: noisy quantization proxy end to end.
/// Returns the scalar loss variable (differentiable w.r.t. every trainable
/// parameter) plus the logged values.
pub fn rd_loss<E: Element>(
    t: &Tape<E>,
    model: &CodecModel<E>,
    v: &ModelVars,
    x: TVar,
    lambda: f64,
    kind: DistortionKind,
    rng: &mut ChaCha8Rng,
) -> Result<RdOutcome> {
    let y = model.analysis(t, v, x).map_err(TrainError::Codec)?;
    let z = model.hyper_analysis(t, v, y);

    let y_noise = t.leaf(add_uniform_noise(
        &gmsd_tensor::Tensor::zeros(t.shape(y)),
        rng,
    ));
    let y_tilde = t.add(y, y_noise);
    let z_noise = t.leaf(add_uniform_noise(
        &gmsd_tensor::Tensor::zeros(t.shape(z)),
        rng,
    ));
    let z_tilde = t.add(z, z_noise);

    assemble_loss(t, model, v, x, y_tilde, z_tilde, lambda, kind)
}

/// Deterministic validation loss: the same objective with round-based
/// quantization instead of noise. No gradients are taken through this.
pub fn validation_loss<E: Element>(
    model: &CodecModel<E>,
    x: &gmsd_tensor::Tensor<E>,
    lambda: f64,
    kind: DistortionKind,
) -> Result<RdParts> {
    let t: Tape<E> = Tape::new();
    let v = model.bind(&t);
    let xv = t.leaf(x.clone());
    let y = model.analysis(&t, &v, xv).map_err(TrainError::Codec)?;
    let z = model.hyper_analysis(&t, &v, y);
    let y_hat = t.leaf(quantize_round(&t.value(y)));
    let z_hat = t.leaf(quantize_round(&t.value(z)));
    let outcome = assemble_loss(&t, model, &v, xv, y_hat, z_hat, lambda, kind)?;
    Ok(outcome.parts)
}

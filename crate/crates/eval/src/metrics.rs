//! Reference-quality metrics: PSNR on 8-bit pixels and a plain double
//! precision MS-SSIM (full 2-D window, no autodiff machinery; this is the
//! independent route the training-side implementation is checked against).

use gmsd_codec::RasterImage;
use gmsd_tensor::Tensor;

use crate::error::{EvalError, Result};

pub const MSSSIM_WEIGHTS: [f64; 5] = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];
const WINDOW: usize = 11;
const WINDOW_SIGMA: f64 = 1.5;
const K1: f64 = 0.01;
const K2: f64 = 0.03;

/// PSNR in dB between two same-shape 8-bit images; identical images give
/// the +infinity sentinel.
pub fn psnr(a: &RasterImage, b: &RasterImage) -> Result<f64> {
    if a.width != b.width || a.height != b.height || a.channels != b.channels {
        return Err(EvalError::Input(format!(
            "psnr shape mismatch: {}x{}x{} vs {}x{}x{}",
            a.width, a.height, a.channels, b.width, b.height, b.channels
        )));
    }
    let mut sq = 0.0f64;
    for (&x, &y) in a.data.iter().zip(&b.data) {
        let d = x as f64 - y as f64;
        sq += d * d;
    }
    let mse = sq / a.data.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (255.0 * 255.0 / mse).log10())
}

fn gaussian_window_2d() -> Vec<f64> {
    let c = (WINDOW as f64 - 1.0) / 2.0;
    let mut taps = vec![0.0; WINDOW * WINDOW];
    let mut sum = 0.0;
    for y in 0..WINDOW {
        for x in 0..WINDOW {
            let d2 = (y as f64 - c).powi(2) + (x as f64 - c).powi(2);
            let v = (-d2 / (2.0 * WINDOW_SIGMA * WINDOW_SIGMA)).exp();
            taps[y * WINDOW + x] = v;
            sum += v;
        }
    }
    for t in taps.iter_mut() {
        *t /= sum;
    }
    taps
}

struct PlaneStats {
    luminance_cs_mean: f64,
    cs_mean: f64,
}

/// SSIM statistics of one channel plane via direct 2-D windowing.
fn plane_ssim(a: &[f64], b: &[f64], h: usize, w: usize, window: &[f64]) -> PlaneStats {
    let ho = h - WINDOW + 1;
    let wo = w - WINDOW + 1;
    let c1 = K1 * K1;
    let c2 = K2 * K2;
    let mut lcs_sum = 0.0;
    let mut cs_sum = 0.0;
    for oy in 0..ho {
        for ox in 0..wo {
            let mut mu_a = 0.0;
            let mut mu_b = 0.0;
            let mut aa = 0.0;
            let mut bb = 0.0;
            let mut ab = 0.0;
            for ky in 0..WINDOW {
                for kx in 0..WINDOW {
                    let wgt = window[ky * WINDOW + kx];
                    let va = a[(oy + ky) * w + ox + kx];
                    let vb = b[(oy + ky) * w + ox + kx];
                    mu_a += wgt * va;
                    mu_b += wgt * vb;
                    aa += wgt * va * va;
                    bb += wgt * vb * vb;
                    ab += wgt * va * vb;
                }
            }
            let var_a = aa - mu_a * mu_a;
            let var_b = bb - mu_b * mu_b;
            let cov = ab - mu_a * mu_b;
            let l = (2.0 * mu_a * mu_b + c1) / (mu_a * mu_a + mu_b * mu_b + c1);
            let cs = (2.0 * cov + c2) / (var_a + var_b + c2);
            lcs_sum += l * cs;
            cs_sum += cs;
        }
    }
    let n = (ho * wo) as f64;
    PlaneStats {
        luminance_cs_mean: lcs_sum / n,
        cs_mean: cs_sum / n,
    }
}

fn downsample2(x: &[f64], h: usize, w: usize) -> (Vec<f64>, usize, usize) {
    let ho = h / 2;
    let wo = w / 2;
    let mut out = vec![0.0; ho * wo];
    for y in 0..ho {
        for xx in 0..wo {
            out[y * wo + xx] = 0.25
                * (x[(2 * y) * w + 2 * xx]
                    + x[(2 * y) * w + 2 * xx + 1]
                    + x[(2 * y + 1) * w + 2 * xx]
                    + x[(2 * y + 1) * w + 2 * xx + 1]);
        }
    }
    (out, ho, wo)
}

/// Scales usable for an image: the coarsest level must hold the window.
pub fn usable_scales(h: usize, w: usize) -> usize {
    let mut scales = 0usize;
    let (mut h, mut w) = (h, w);
    while scales < MSSSIM_WEIGHTS.len() && h >= WINDOW && w >= WINDOW {
        scales += 1;
        h /= 2;
        w /= 2;
    }
    scales.max(1)
}

/// MS-SSIM in [0,1] of two (1, C, H, W) tensors scaled to [0,1], channel
/// results averaged. Scales that no longer fit the window are dropped and
/// the exponents renormalized.
pub fn ms_ssim(a: &Tensor<f64>, b: &Tensor<f64>) -> Result<f64> {
    let (ba, c, h, w) = a.dims4().map_err(EvalError::Tensor)?;
    if a.shape() != b.shape() || ba != 1 {
        return Err(EvalError::Input(format!(
            "ms_ssim expects matching (1,C,H,W) tensors, got {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    if h < WINDOW || w < WINDOW {
        return Err(EvalError::Input(format!(
            "ms_ssim needs at least {WINDOW}x{WINDOW} input, got {h}x{w}"
        )));
    }
    let scales = usable_scales(h, w);
    let weight_sum: f64 = MSSSIM_WEIGHTS[..scales].iter().sum();
    let window = gaussian_window_2d();

    let mut result = 1.0f64;
    let mut pa: Vec<Vec<f64>> = (0..c)
        .map(|ch| a.data()[ch * h * w..(ch + 1) * h * w].to_vec())
        .collect();
    let mut pb: Vec<Vec<f64>> = (0..c)
        .map(|ch| b.data()[ch * h * w..(ch + 1) * h * w].to_vec())
        .collect();
    let (mut ch_h, mut ch_w) = (h, w);
    for scale in 0..scales {
        let mut lcs = 0.0;
        let mut cs = 0.0;
        for ch in 0..c {
            let stats = plane_ssim(&pa[ch], &pb[ch], ch_h, ch_w, &window);
            lcs += stats.luminance_cs_mean;
            cs += stats.cs_mean;
        }
        lcs /= c as f64;
        cs /= c as f64;
        let weight = MSSSIM_WEIGHTS[scale] / weight_sum;
        let term = if scale + 1 == scales { lcs } else { cs };
        result *= term.max(1e-6).powf(weight);
        if scale + 1 < scales {
            for ch in 0..c {
                let (na, nh, nw) = downsample2(&pa[ch], ch_h, ch_w);
                pa[ch] = na;
                let (nb, _, _) = downsample2(&pb[ch], ch_h, ch_w);
                pb[ch] = nb;
                if ch + 1 == c {
                    ch_h = nh;
                    ch_w = nw;
                }
            }
        }
    }
    Ok(result.clamp(0.0, 1.0))
}

/// MS-SSIM of two 8-bit images.
pub fn ms_ssim_images(a: &RasterImage, b: &RasterImage) -> Result<f64> {
    ms_ssim(&a.to_tensor::<f64>(), &b.to_tensor::<f64>())
}

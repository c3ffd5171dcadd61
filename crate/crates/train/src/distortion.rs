//! Distortion terms: MSE and a differentiable multi-scale SSIM.

use gmsd_codec::DistortionKind;
use gmsd_tensor::{Element, Tape, TVar};

/// Standard 5-scale MS-SSIM exponents.
pub const MSSSIM_WEIGHTS: [f64; 5] = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];
/// 11-tap Gaussian window, sigma 1.5.
pub const WINDOW: usize = 11;
const WINDOW_SIGMA: f64 = 1.5;
const K1: f64 = 0.01;
const K2: f64 = 0.03;

pub fn gaussian_window(n: usize, sigma: f64) -> Vec<f64> {
    let c = (n as f64 - 1.0) / 2.0;
    let mut taps: Vec<f64> = (0..n)
        .map(|i| (-((i as f64 - c).powi(2)) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = taps.iter().sum();
    for t in taps.iter_mut() {
        *t /= sum;
    }
    taps
}

/// How many MS-SSIM scales a (h, w) image supports: the coarsest level
/// must still hold the 11-tap window.
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

/// Mean squared error over all elements.
pub fn mse_t<E: Element>(t: &Tape<E>, x: TVar, y: TVar) -> TVar {
    let d = t.sub(x, y);
    let sq = t.mul(d, d);
    t.mean(sq)
}

/// Per-scale SSIM statistics on the tape: (luminance-term mean, cs mean).
fn ssim_scale<E: Element>(t: &Tape<E>, x: TVar, y: TVar, taps: &[E]) -> (TVar, TVar) {
    let c1 = E::from_f64(K1 * K1);
    let c2 = E::from_f64(K2 * K2);
    let blur = |v: TVar| -> TVar {
        let r = t.filter_rows(v, taps);
        t.filter_cols(r, taps)
    };
    let mu_x = blur(x);
    let mu_y = blur(y);
    let xx = t.mul(x, x);
    let yy = t.mul(y, y);
    let xy = t.mul(x, y);
    let e_xx = blur(xx);
    let e_yy = blur(yy);
    let e_xy = blur(xy);

    let mu_xx = t.mul(mu_x, mu_x);
    let mu_yy = t.mul(mu_y, mu_y);
    let mu_xy = t.mul(mu_x, mu_y);
    let var_x = t.sub(e_xx, mu_xx);
    let var_y = t.sub(e_yy, mu_yy);
    let cov = t.sub(e_xy, mu_xy);

    // cs = (2*cov + C2) / (var_x + var_y + C2)
    let cs_num = {
        let two_cov = t.mul_scalar(cov, E::from_f64(2.0));
        t.add_scalar(two_cov, c2)
    };
    let cs_den = {
        let s = t.add(var_x, var_y);
        t.add_scalar(s, c2)
    };
    let cs_map = t.div(cs_num, cs_den);

    // l = (2*mu_x*mu_y + C1) / (mu_x^2 + mu_y^2 + C1)
    let l_num = {
        let two_mu = t.mul_scalar(mu_xy, E::from_f64(2.0));
        t.add_scalar(two_mu, c1)
    };
    let l_den = {
        let s = t.add(mu_xx, mu_yy);
        t.add_scalar(s, c1)
    };
    let l_map = t.div(l_num, l_den);

    let lcs_map = t.mul(l_map, cs_map);
    (t.mean(lcs_map), t.mean(cs_map))
}

/// Differentiable MS-SSIM in [0,1] of two (B, C, H, W) tensors scaled to
/// [0,1]. Scales that no longer fit the 11-tap window are dropped and the
/// exponents renormalized.
pub fn ms_ssim_t<E: Element>(t: &Tape<E>, x: TVar, y: TVar) -> TVar {
    let shape = t.shape(x);
    assert_eq!(shape, t.shape(y), "ms_ssim shape mismatch");
    let (h, w) = (shape[2], shape[3]);
    let scales = usable_scales(h, w);
    assert!(
        h >= WINDOW && w >= WINDOW,
        "ms_ssim needs at least {WINDOW}x{WINDOW} input, got {h}x{w}"
    );
    let weight_sum: f64 = MSSSIM_WEIGHTS[..scales].iter().sum();
    let taps: Vec<E> = gaussian_window(WINDOW, WINDOW_SIGMA)
        .into_iter()
        .map(E::from_f64)
        .collect();

    let floor = E::from_f64(1e-6);
    let mut acc: Option<TVar> = None;
    let (mut cx, mut cy) = (x, y);
    for scale in 0..scales {
        let (lcs, cs) = ssim_scale(t, cx, cy, &taps);
        let weight = E::from_f64(MSSSIM_WEIGHTS[scale] / weight_sum);
        // the coarsest scale contributes l*cs, the others cs only
        let term = if scale + 1 == scales { lcs } else { cs };
        let term = t.clamp_min(term, floor);
        let powed = t.powf(term, weight);
        acc = Some(match acc {
            None => powed,
            Some(a) => t.mul(a, powed),
        });
        if scale + 1 < scales {
            cx = t.avg_pool2(cx);
            cy = t.avg_pool2(cy);
        }
    }
    acc.expect("at least one scale")
}

/// Distortion used by the RD loss: MSE on [0,1] pixels, or 1 - MS-SSIM.
pub fn distortion_t<E: Element>(t: &Tape<E>, x: TVar, x_rec: TVar, kind: DistortionKind) -> TVar {
    match kind {
        DistortionKind::Mse => mse_t(t, x, x_rec),
        DistortionKind::MsSsim => {
            let s = ms_ssim_t(t, x, x_rec);
            let neg = t.neg(s);
            t.add_scalar(neg, E::one())
        }
    }
}

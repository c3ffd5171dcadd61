//! Discretized Gaussian-mixture likelihoods and the minimum-weight
//! degeneracy diagnostic.
//!
//! A latent element's probability under the ternary mixture is
//! `p(s) = sum_k w_k * (Phi((s + 1/2 - mu_k)/sigma_k) - Phi((s - 1/2 - mu_k)/sigma_k))`,
//! the discretization of the mixture density convolved with U(-1/2, 1/2).

use gmsd_tensor::{Element, Tape, TVar, Tensor};

use crate::error::{CodecError, Result};

/// Probability floor applied before any log.
pub const PROB_FLOOR: f64 = 1e-9;
/// Mixture scale bounds.
pub const SIGMA_MIN: f64 = 1e-6;
pub const SIGMA_MAX: f64 = 256.0;

/// Standard normal CDF via erf.
#[inline]
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x * std::f64::consts::FRAC_1_SQRT_2))
}

/// Probability that a unit-noise-convolved Gaussian lands in the width-1
/// cell centered on `s`.
#[inline]
pub fn discrete_gaussian_prob(s: f64, mean: f64, scale: f64) -> f64 {
    normal_cdf((s + 0.5 - mean) / scale) - normal_cdf((s - 0.5 - mean) / scale)
}

/// Unfloored mixture cell probability for one element.
pub fn gmm_pmf_scalar_raw(s: f64, weights: &[f64], means: &[f64], scales: &[f64]) -> f64 {
    let mut p = 0.0;
    for ((&w, &mu), &sg) in weights.iter().zip(means).zip(scales) {
        p += w * discrete_gaussian_prob(s, mu, sg);
    }
    p
}

/// Floored mixture cell probability for one element.
pub fn gmm_pmf_scalar(s: f64, weights: &[f64], means: &[f64], scales: &[f64]) -> f64 {
    gmm_pmf_scalar_raw(s, weights, means, scales).max(PROB_FLOOR)
}

/// Per-element mixture parameters over a (B, M, H, W) grid, stored as one
/// tensor per component so the mixture loop stays a plain Rust loop.
#[derive(Clone, Debug)]
pub struct GmmParams<E: Element> {
    pub weights: Vec<Tensor<E>>,
    pub means: Vec<Tensor<E>>,
    pub scales: Vec<Tensor<E>>,
}

impl<E: Element> GmmParams<E> {
    pub fn new(weights: Vec<Tensor<E>>, means: Vec<Tensor<E>>, scales: Vec<Tensor<E>>) -> Result<Self> {
        if weights.is_empty() || weights.len() != means.len() || weights.len() != scales.len() {
            return Err(CodecError::Config(
                "GMM parameter families must have the same nonzero component count".into(),
            ));
        }
        let shape = weights[0].shape().to_vec();
        for t in weights.iter().chain(&means).chain(&scales) {
            if t.shape() != shape {
                return Err(CodecError::Config(
                    "GMM parameter tensors must share one shape".into(),
                ));
            }
        }
        Ok(Self {
            weights,
            means,
            scales,
        })
    }

    pub fn k(&self) -> usize {
        self.weights.len()
    }

    /// Clamp scales into [SIGMA_MIN, SIGMA_MAX]; returns how many elements
    /// were out of bounds (a diagnostics counter, not an error).
    pub fn sanitize_scales(&mut self) -> usize {
        let lo = E::from_f64(SIGMA_MIN);
        let hi = E::from_f64(SIGMA_MAX);
        let mut clamped = 0usize;
        for t in &mut self.scales {
            for v in t.data_mut() {
                if *v < lo {
                    *v = lo;
                    clamped += 1;
                } else if *v > hi {
                    *v = hi;
                    clamped += 1;
                }
            }
        }
        clamped
    }

    /// Largest absolute deviation of the per-element weight sum from 1.
    pub fn simplex_violation(&self) -> f64 {
        let n = self.weights[0].numel();
        let mut worst = 0.0f64;
        for i in 0..n {
            let mut s = 0.0;
            for w in &self.weights {
                s += w.data()[i].as_f64();
            }
            worst = worst.max((s - 1.0).abs());
        }
        worst
    }

    /// Floored pmf of integer-valued `symbols` (same shape as the grid).
    pub fn pmf(&self, symbols: &Tensor<E>) -> Result<Tensor<E>> {
        let shape = self.weights[0].shape();
        if symbols.shape() != shape {
            return Err(CodecError::Precondition(format!(
                "symbol shape {:?} != parameter shape {:?}",
                symbols.shape(),
                shape
            )));
        }
        let n = symbols.numel();
        let mut out = Tensor::zeros(shape.to_vec());
        {
            let dst = out.data_mut();
            for i in 0..n {
                let s = symbols.data()[i].as_f64();
                let mut p = 0.0;
                for k in 0..self.k() {
                    p += self.weights[k].data()[i].as_f64()
                        * discrete_gaussian_prob(
                            s,
                            self.means[k].data()[i].as_f64(),
                            self.scales[k].data()[i].as_f64(),
                        );
                }
                dst[i] = E::from_f64(p.max(PROB_FLOOR));
            }
        }
        Ok(out)
    }

    /// The degeneracy diagnostic: minimum weight over the K components,
    /// averaged along the channel dimension. Input grids are (B, M, H, W);
    /// the map is (B, H, W) with values in [0, 1/K].
    pub fn min_weight_channel_average(&self) -> Result<Tensor<E>> {
        let (b, m, h, w) = self.weights[0].dims4().map_err(CodecError::Tensor)?;
        let mut out = Tensor::zeros(vec![b, h, w]);
        {
            let dst = out.data_mut();
            for bi in 0..b {
                for y in 0..h {
                    for x in 0..w {
                        let mut acc = 0.0f64;
                        for c in 0..m {
                            let idx = ((bi * m + c) * h + y) * w + x;
                            let mut min_w = f64::INFINITY;
                            for wk in &self.weights {
                                min_w = min_w.min(wk.data()[idx].as_f64());
                            }
                            acc += min_w;
                        }
                        dst[(bi * h + y) * w + x] = E::from_f64(acc / m as f64);
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Tape-side mixture parameters: one (B, M, H, W) variable per component
/// and family. Shapes and invariants match [`GmmParams`].
#[derive(Clone, Debug)]
pub struct GmmVars {
    pub weights: Vec<TVar>,
    pub means: Vec<TVar>,
    pub scales: Vec<TVar>,
}

impl GmmVars {
    pub fn k(&self) -> usize {
        self.weights.len()
    }

    /// Materialize current values into plain parameters.
    pub fn values<E: Element>(&self, t: &Tape<E>) -> Result<GmmParams<E>> {
        GmmParams::new(
            self.weights.iter().map(|&v| t.value(v)).collect(),
            self.means.iter().map(|&v| t.value(v)).collect(),
            self.scales.iter().map(|&v| t.value(v)).collect(),
        )
    }
}

/// Assemble mixture parameters from raw network outputs: softmax over K
/// for the weights, exp of a clamped log-scale for sigma. Raw tensors are
/// (B, K*M, H, W) with component-major channel blocks (k*M + m).
pub fn assemble_gmm<E: Element>(
    t: &Tape<E>,
    w_raw: TVar,
    mu_raw: TVar,
    sigma_raw: TVar,
    m: usize,
    k: usize,
) -> GmmVars {
    let per_k =
        |v: TVar| -> Vec<TVar> { (0..k).map(|i| t.slice_channels(v, i * m, (i + 1) * m)).collect() };
    let w_parts = per_k(w_raw);
    let mu_parts = per_k(mu_raw);
    let sg_parts = per_k(sigma_raw);

    // numerically stable softmax over the K components
    let mut max = w_parts[0];
    for &p in &w_parts[1..] {
        max = t.maximum(max, p);
    }
    let exps: Vec<TVar> = w_parts.iter().map(|&p| {
        let d = t.sub(p, max);
        t.exp(d)
    }).collect();
    let mut denom = exps[0];
    for &e in &exps[1..] {
        denom = t.add(denom, e);
    }
    let weights: Vec<TVar> = exps.iter().map(|&e| t.div(e, denom)).collect();

    let lo = E::from_f64(SIGMA_MIN.ln());
    let hi = E::from_f64(SIGMA_MAX.ln());
    let scales: Vec<TVar> = sg_parts
        .iter()
        .map(|&p| {
            let c = t.clamp(p, lo, hi);
            t.exp(c)
        })
        .collect();

    GmmVars {
        weights,
        means: mu_parts,
        scales,
    }
}

/// Differentiable floored pmf of `y` under tape-side mixture parameters.
pub fn gmm_likelihood<E: Element>(t: &Tape<E>, y: TVar, params: &GmmVars) -> TVar {
    let half = E::from_f64(0.5);
    let inv_sqrt2 = E::from_f64(std::f64::consts::FRAC_1_SQRT_2);
    let mut total: Option<TVar> = None;
    for k in 0..params.k() {
        let mu = params.means[k];
        let sg = params.scales[k];
        let centered = t.sub(y, mu);
        let hi = t.add_scalar(centered, half);
        let lo = t.add_scalar(centered, -half);
        let phi = |v: TVar| -> TVar {
            let z = t.div(v, sg);
            let z = t.mul_scalar(z, inv_sqrt2);
            let e = t.erf(z);
            let e = t.add_scalar(e, E::one());
            t.mul_scalar(e, half)
        };
        let cell = t.sub(phi(hi), phi(lo));
        let term = t.mul(params.weights[k], cell);
        total = Some(match total {
            None => term,
            Some(acc) => t.add(acc, term),
        });
    }
    let p = total.expect("k >= 1");
    t.clamp_min(p, E::from_f64(PROB_FLOOR))
}

/// Total rate in bits of a floored pmf tensor: sum of -log2 p.
pub fn rate_bits_t<E: Element>(t: &Tape<E>, pmf: TVar) -> TVar {
    let ln_p = t.ln(pmf);
    let total = t.sum(ln_p);
    t.mul_scalar(total, E::from_f64(-1.0 / std::f64::consts::LN_2))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// High-precision oracle value of erf(0.5/sqrt(2)): the probability a
    /// unit Gaussian cell centered at its mean captures.
    const CENTER_CELL_PROB: f64 = 0.3829249225480262;

    fn uniform_params(vals: &[(f64, f64, f64)], shape: Vec<usize>) -> GmmParams<f64> {
        GmmParams::new(
            vals.iter().map(|&(w, _, _)| Tensor::full(shape.clone(), w)).collect(),
            vals.iter().map(|&(_, m, _)| Tensor::full(shape.clone(), m)).collect(),
            vals.iter().map(|&(_, _, s)| Tensor::full(shape.clone(), s)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn unit_component_center_cell_matches_erf_oracle() {
        let p = gmm_pmf_scalar(0.0, &[1.0, 0.0, 0.0], &[0.0; 3], &[1.0; 3]);
        assert!((p - CENTER_CELL_PROB).abs() < 1e-12, "{p}");
    }

    #[test]
    fn pmf_normalizes_over_wide_alphabet() {
        // normalization is a property of the raw discretized density;
        // the 1e-9 floor only guards the log
        for (mu, sigma) in [(0.0, 1.0), (-100.0, 16.0), (100.0, 0.11), (37.5, 4.0)] {
            let total: f64 = (-1000..=1000)
                .map(|s| {
                    gmm_pmf_scalar_raw(
                        s as f64,
                        &[0.25, 0.5, 0.25],
                        &[mu, mu - 3.0, mu + 5.0],
                        &[sigma, sigma, sigma],
                    )
                })
                .sum();
            assert!((total - 1.0).abs() < 1e-6, "mu={mu} sigma={sigma}: {total}");
        }
    }

    #[test]
    fn floored_pmf_normalizes_over_sigma_padded_range() {
        // the invariant form: +/-64*sigma padding around the mean keeps the
        // floor's contribution below 1e-6
        for (mu, sigma) in [(0.0f64, 1.0f64), (3.0, 0.5), (-7.0, 2.0)] {
            let pad = (64.0 * sigma).ceil() as i64;
            let lo = (mu - pad as f64).floor() as i64;
            let hi = (mu + pad as f64).ceil() as i64;
            let total: f64 = (lo..=hi)
                .map(|s| gmm_pmf_scalar(s as f64, &[0.6, 0.4, 0.0], &[mu, mu, 0.0], &[sigma, sigma, 1.0]))
                .sum();
            assert!((total - 1.0).abs() < 1e-6, "mu={mu} sigma={sigma}: {total}");
        }
    }

    #[test]
    fn two_identical_half_weight_components_match_single() {
        for s in -5..=5 {
            let two = gmm_pmf_scalar(s as f64, &[0.5, 0.5, 0.0], &[1.2, 1.2, 0.0], &[0.7, 0.7, 1.0]);
            let one = gmm_pmf_scalar(s as f64, &[1.0, 0.0, 0.0], &[1.2, 0.0, 0.0], &[0.7, 1.0, 1.0]);
            assert!((two - one).abs() < 1e-15);
        }
    }

    #[test]
    fn min_weight_map_constant_thirds() {
        let p = uniform_params(
            &[(1.0 / 3.0, 0.0, 1.0), (1.0 / 3.0, 0.0, 1.0), (1.0 / 3.0, 0.0, 1.0)],
            vec![1, 4, 2, 2],
        );
        let map = p.min_weight_channel_average().unwrap();
        for &v in map.data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn min_weight_map_degenerate_weights() {
        let p = uniform_params(
            &[(0.98, 0.0, 1.0), (0.01, 0.0, 1.0), (0.01, 0.0, 1.0)],
            vec![1, 4, 3, 3],
        );
        let map = p.min_weight_channel_average().unwrap();
        for &v in map.data() {
            assert!((v - 0.01).abs() < 1e-12);
        }
    }

    #[test]
    fn min_weight_map_mixed_channels() {
        // channel 0: (1,0,0) -> min 0; channel 1: (1/3,1/3,1/3) -> min 1/3
        let shape = vec![1usize, 2, 1, 1];
        let w0 = Tensor::new(shape.clone(), vec![1.0, 1.0 / 3.0]).unwrap();
        let w1 = Tensor::new(shape.clone(), vec![0.0, 1.0 / 3.0]).unwrap();
        let w2 = Tensor::new(shape.clone(), vec![0.0, 1.0 / 3.0]).unwrap();
        let ones = Tensor::full(shape.clone(), 1.0);
        let zeros = Tensor::zeros(shape.clone());
        let p: GmmParams<f64> = GmmParams::new(
            vec![w0, w1, w2],
            vec![zeros.clone(), zeros.clone(), zeros],
            vec![ones.clone(), ones.clone(), ones],
        )
        .unwrap();
        let map = p.min_weight_channel_average().unwrap();
        assert!((map.item() - 1.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn scale_sanitize_counts_clamps() {
        let shape = vec![1usize, 1, 1, 4];
        let mut p = GmmParams::new(
            vec![Tensor::full(shape.clone(), 1.0f64)],
            vec![Tensor::zeros(shape.clone())],
            vec![Tensor::new(shape.clone(), vec![1.0, 1e-9, 300.0, 0.5]).unwrap()],
        )
        .unwrap();
        assert_eq!(p.sanitize_scales(), 2);
        assert_eq!(p.sanitize_scales(), 0);
        assert!(p.scales[0].data().iter().all(|&s| (SIGMA_MIN..=SIGMA_MAX).contains(&s)));
    }

    #[test]
    fn rate_bits_uniform_256() {
        // uniform pmf 2^-8 over 256 symbols, one symbol each -> 8 bits/symbol
        let t: Tape<f64> = Tape::new();
        let pmf = t.leaf(Tensor::full(vec![256], 1.0 / 256.0));
        let bits = rate_bits_t(&t, pmf);
        assert!((t.value(bits).item() - 8.0 * 256.0).abs() < 1e-9);

        let sure = t.leaf(Tensor::full(vec![37], 1.0));
        let bits = rate_bits_t(&t, sure);
        assert!(t.value(bits).item().abs() < 1e-12);
    }

    #[test]
    fn rate_bits_matches_log_sum_oracle() {
        let mut rng = gmsd_tensor::init::seeded_rng(3);
        let pmf: Tensor<f64> = gmsd_tensor::init::uniform(&mut rng, vec![128], 1e-6, 1.0);
        let oracle: f64 = pmf.data().iter().map(|&p| -(p.log2())).sum();
        let t: Tape<f64> = Tape::new();
        let v = t.leaf(pmf);
        let bits = rate_bits_t(&t, v);
        let got = t.value(bits).item();
        let rel = (got - oracle).abs() / oracle.abs();
        assert!(rel < 1e-10, "{got} vs {oracle}");
    }
}

//! The serial per-position entropy-parameter pipeline.
//!
//! Encoder and decoder both run this exact code to derive each raster
//! position's mixture parameters, so their tables agree bit-for-bit. The
//! masked context taps only ever read positions strictly before the
//! current one, which makes evaluation on the full latent buffer
//! (encoder) identical to evaluation on a progressively filled buffer
//! (decoder).

use gmsd_tensor::kernels::type_a_taps;
use gmsd_tensor::{Element, Tensor};

use crate::config::DecoderMode;
use crate::error::{CodecError, Result};
use crate::gmm::{SIGMA_MAX, SIGMA_MIN};
use crate::network::CodecModel;

/// Mixture parameters for every latent channel at one spatial position,
/// laid out `[channel * K + component]`.
#[derive(Clone, Debug, PartialEq)]
pub struct GmmPos<E: Element> {
    pub weights: Vec<E>,
    pub means: Vec<E>,
    pub scales: Vec<E>,
}

impl<E: Element> GmmPos<E> {
    pub fn component_f64(&self, m: usize, k_total: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let base = m * k_total;
        let take = |v: &[E]| -> Vec<f64> {
            v[base..base + k_total].iter().map(|x| x.as_f64()).collect()
        };
        (
            take(&self.weights),
            take(&self.means),
            take(&self.scales),
        )
    }
}

struct Layer1x1<'a, E: Element> {
    w: &'a [E],
    b: &'a [E],
    cin: usize,
    cout: usize,
}

pub struct SerialPipeline<'a, E: Element> {
    model: &'a CodecModel<E>,
    /// Hyper features per branch, each (1, C_h, Hy, Wy).
    hyper: &'a [Tensor<E>],
    taps: Vec<(usize, usize)>,
    hy: usize,
    wy: usize,
}

impl<'a, E: Element> SerialPipeline<'a, E> {
    pub fn new(model: &'a CodecModel<E>, hyper: &'a [Tensor<E>]) -> Result<Self> {
        if hyper.len() != model.config.decoder_mode.branch_count() {
            return Err(CodecError::Internal(format!(
                "expected {} hyper branches, got {}",
                model.config.decoder_mode.branch_count(),
                hyper.len()
            )));
        }
        let (_b, ch, hy, wy) = hyper[0].dims4().map_err(CodecError::Tensor)?;
        if ch != model.channel_plan().hyper_decoder[4] {
            return Err(CodecError::Internal(
                "hyper feature width does not match the channel plan".into(),
            ));
        }
        Ok(Self {
            model,
            hyper,
            taps: type_a_taps(5, 5),
            hy,
            wy,
        })
    }

    fn entropy_layers(&self, branch: usize) -> [Layer1x1<'_, E>; 3] {
        let store = &self.model.store;
        let net = &self.model.f[branch];
        let layer = |kernel, bias| {
            let kv = store.value(kernel);
            let (cout, cin, _, _) = kv.dims4().unwrap();
            Layer1x1 {
                w: store.value(kernel).data(),
                b: store.value(bias).data(),
                cin,
                cout,
            }
        };
        [
            layer(net.l1.kernel, net.l1.bias),
            layer(net.l2.kernel, net.l2.bias),
            layer(net.l3.kernel, net.l3.bias),
        ]
    }

    /// Context features at one position: the masked 5x5 convolution
    /// evaluated on `y_buf`, reading only raster-prior taps.
    fn context_at(&self, y_buf: &Tensor<E>, py: usize, px: usize) -> Vec<E> {
        let m = self.model.config.m;
        let cout = self.model.ctx.out_ch;
        let kernel = self.model.store.value(self.model.ctx.kernel).data();
        let bias = self.model.store.value(self.model.ctx.bias).data();
        let y = y_buf.data();
        let (hy, wy) = (self.hy, self.wy);
        let mut out = vec![E::zero(); cout];
        for (co, slot) in out.iter_mut().enumerate() {
            let mut acc = E::zero();
            for ci in 0..m {
                let plane = &y[(ci * hy) * wy..][..hy * wy];
                let kbase = (co * m + ci) * 25;
                for &(ky, kx) in &self.taps {
                    let iy = py as isize + ky as isize - 2;
                    let ix = px as isize + kx as isize - 2;
                    if iy < 0 || ix < 0 || iy >= hy as isize || ix >= wy as isize {
                        continue;
                    }
                    acc += kernel[kbase + ky * 5 + kx] * plane[iy as usize * wy + ix as usize];
                }
            }
            *slot = acc + bias[co];
        }
        out
    }

    fn run_entropy_net(&self, branch: usize, input: &[E]) -> Vec<E> {
        let layers = self.entropy_layers(branch);
        let slope = E::from_f64(gmsd_tensor::LEAKY_SLOPE);
        let mut cur = input.to_vec();
        for (li, layer) in layers.iter().enumerate() {
            debug_assert_eq!(cur.len(), layer.cin);
            let mut next = vec![E::zero(); layer.cout];
            for (j, slot) in next.iter_mut().enumerate() {
                let mut acc = E::zero();
                let row = &layer.w[j * layer.cin..][..layer.cin];
                for (wv, xv) in row.iter().zip(cur.iter()) {
                    acc += *wv * *xv;
                }
                acc += layer.b[j];
                if li < 2 && acc <= E::zero() {
                    acc = acc * slope;
                }
                *slot = acc;
            }
            cur = next;
        }
        cur
    }

    /// Mixture parameters for all channels at one position. `y_buf` holds
    /// the (1, M, Hy, Wy) decoded-so-far latents; entries at and after
    /// (py, px) are never read.
    pub fn params_at(&self, y_buf: &Tensor<E>, py: usize, px: usize) -> GmmPos<E> {
        let m = self.model.config.m;
        let k = self.model.config.k;
        let km = m * k;
        let ctx = self.context_at(y_buf, py, px);
        let hyper_at = |branch: usize| -> Vec<E> {
            let t = &self.hyper[branch];
            let (_b, ch, hy, wy) = t.dims4().unwrap();
            let data = t.data();
            (0..ch)
                .map(|c| data[(c * hy + py) * wy + px])
                .collect()
        };

        let (w_raw, mu_raw, sg_raw) = match self.model.config.decoder_mode {
            DecoderMode::Mixed => {
                let mut input = ctx.clone();
                input.extend(hyper_at(0));
                let raw = self.run_entropy_net(0, &input);
                debug_assert_eq!(raw.len(), 3 * km);
                (
                    raw[0..km].to_vec(),
                    raw[km..2 * km].to_vec(),
                    raw[2 * km..3 * km].to_vec(),
                )
            }
            DecoderMode::Separate => {
                let mut families = Vec::with_capacity(3);
                for branch in 0..3 {
                    let mut input = ctx.clone();
                    input.extend(hyper_at(branch));
                    let raw = self.run_entropy_net(branch, &input);
                    debug_assert_eq!(raw.len(), km);
                    families.push(raw);
                }
                let sg = families.pop().unwrap();
                let mu = families.pop().unwrap();
                let w = families.pop().unwrap();
                (w, mu, sg)
            }
        };

        // raw family blocks are component-major (k*M + m); emit
        // channel-major (m*K + k) with softmax weights and exp-clamp scales
        let ln_lo = E::from_f64(SIGMA_MIN.ln());
        let ln_hi = E::from_f64(SIGMA_MAX.ln());
        let mut weights = vec![E::zero(); km];
        let mut means = vec![E::zero(); km];
        let mut scales = vec![E::zero(); km];
        for mi in 0..m {
            let mut max = w_raw[mi];
            for ki in 1..k {
                let v = w_raw[ki * m + mi];
                if v > max {
                    max = v;
                }
            }
            let mut denom = E::zero();
            for ki in 0..k {
                denom += (w_raw[ki * m + mi] - max).exp();
            }
            for ki in 0..k {
                let e = (w_raw[ki * m + mi] - max).exp();
                weights[mi * k + ki] = e / denom;
                means[mi * k + ki] = mu_raw[ki * m + mi];
                let mut raw = sg_raw[ki * m + mi];
                if raw < ln_lo {
                    raw = ln_lo;
                } else if raw > ln_hi {
                    raw = ln_hi;
                }
                scales[mi * k + ki] = raw.exp();
            }
        }
        GmmPos {
            weights,
            means,
            scales,
        }
    }

    /// Parameters at every raster position, computed from the complete
    /// latent buffer in one pass.
    pub fn collect_full(&self, y_full: &Tensor<E>) -> Vec<GmmPos<E>> {
        let mut out = Vec::with_capacity(self.hy * self.wy);
        for py in 0..self.hy {
            for px in 0..self.wy {
                out.push(self.params_at(y_full, py, px));
            }
        }
        out
    }

    /// Parameters at every raster position, revealing the latents one
    /// position at a time (the decoder's view).
    pub fn collect_incremental(&self, y_full: &Tensor<E>) -> Vec<GmmPos<E>> {
        let m = self.model.config.m;
        let (hy, wy) = (self.hy, self.wy);
        let mut buf = Tensor::zeros(vec![1, m, hy, wy]);
        let mut out = Vec::with_capacity(hy * wy);
        for py in 0..hy {
            for px in 0..wy {
                out.push(self.params_at(&buf, py, px));
                let data = buf.data_mut();
                for c in 0..m {
                    let idx = (c * hy + py) * wy + px;
                    data[idx] = y_full.data()[idx];
                }
            }
        }
        out
    }

    pub fn grid(&self) -> (usize, usize) {
        (self.hy, self.wy)
    }
}

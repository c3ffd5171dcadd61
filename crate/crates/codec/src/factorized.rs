//! Learned per-channel factorized density for the hyper-latent.
//!
//! Each channel gets an independent monotone univariate cumulative
//! c(x) = sigmoid(f_4(f_3(f_2(f_1(x))))) built from positive-weight affine
//! layers (softplus-parameterized) with tanh-gated couplings, hidden widths
//! 3-3-3. The cell probability of an integer symbol is c(s+1/2) - c(s-1/2).

use std::sync::Arc;

use gmsd_tensor::{sigmoid, CustomOp, Element, ParamId, ParamStore, Tape, TVar, Tensor};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::gmm::PROB_FLOOR;

/// Hidden layer widths.
const FILTERS: [usize; 5] = [1, 3, 3, 3, 1];
const LAYERS: usize = 4;
/// Init spread: the initial cumulative is roughly a unit-width logistic.
const INIT_SCALE: f64 = 1.0;

#[derive(Clone, Debug)]
pub struct FactorizedDensity {
    pub channels: usize,
    /// Raw (pre-softplus) weight matrices, shape (C, out_w, in_w) each.
    pub h_raw: [ParamId; LAYERS],
    /// Biases, shape (C, out_w).
    pub bias: [ParamId; LAYERS],
    /// Gate factors for the three hidden layers, shape (C, out_w).
    pub factor: [ParamId; LAYERS - 1],
}

impl FactorizedDensity {
    pub fn init<E: Element>(
        store: &mut ParamStore<E>,
        rng: &mut ChaCha8Rng,
        prefix: &str,
        channels: usize,
    ) -> Result<Self> {
        let scale = INIT_SCALE.powf(1.0 / LAYERS as f64);
        let mut h_raw = Vec::new();
        let mut bias = Vec::new();
        let mut factor = Vec::new();
        for i in 0..LAYERS {
            let (inw, outw) = (FILTERS[i], FILTERS[i + 1]);
            // softplus(h) ~ 1/(scale*out_w) at init keeps the composed slope
            // near 1/INIT_SCALE
            let init = ((1.0 / (scale * outw as f64)).exp_m1()).ln();
            h_raw.push(store.add(
                format!("{prefix}.h{i}"),
                Tensor::full(vec![channels, outw, inw], E::from_f64(init)),
                true,
            )?);
            bias.push(store.add(
                format!("{prefix}.b{i}"),
                gmsd_tensor::init::uniform(rng, vec![channels, outw], -0.5, 0.5),
                true,
            )?);
            if i + 1 < LAYERS {
                factor.push(store.add(
                    format!("{prefix}.a{i}"),
                    Tensor::zeros(vec![channels, outw]),
                    true,
                )?);
            }
        }
        Ok(Self {
            channels,
            h_raw: h_raw.try_into().unwrap(),
            bias: bias.try_into().unwrap(),
            factor: factor.try_into().unwrap(),
        })
    }

    fn snapshot<E: Element>(&self, store: &ParamStore<E>) -> DensityValues<E> {
        DensityValues {
            channels: self.channels,
            h_raw: self.h_raw.map(|id| store.value(id).clone()),
            bias: self.bias.map(|id| store.value(id).clone()),
            factor: self.factor.map(|id| store.value(id).clone()),
        }
    }

    /// Cumulative c(x) for one channel, evaluated in f64.
    pub fn cumulative<E: Element>(&self, store: &ParamStore<E>, ch: usize, x: f64) -> f64 {
        self.snapshot(store).cumulative(ch, x)
    }

    /// Floored cell probability of integer symbol `s` for one channel.
    pub fn pmf<E: Element>(&self, store: &ParamStore<E>, ch: usize, s: i64) -> f64 {
        let v = self.snapshot(store);
        (v.cumulative(ch, s as f64 + 0.5) - v.cumulative(ch, s as f64 - 0.5)).max(PROB_FLOOR)
    }

    /// Differentiable floored pmf of a (B, C, H, W) symbol tensor. The
    /// density parameters receive gradients through a custom backward.
    pub fn pmf_t<E: Element>(
        &self,
        t: &Tape<E>,
        z: TVar,
        vars: &impl Fn(ParamId) -> TVar,
    ) -> TVar {
        let mut inputs = vec![z];
        inputs.extend(self.h_raw.iter().map(|&id| vars(id)));
        inputs.extend(self.bias.iter().map(|&id| vars(id)));
        inputs.extend(self.factor.iter().map(|&id| vars(id)));

        let tensors: Vec<Tensor<E>> = inputs.iter().map(|&v| t.value(v)).collect();
        let values = DensityValues {
            channels: self.channels,
            h_raw: [
                tensors[1].clone(),
                tensors[2].clone(),
                tensors[3].clone(),
                tensors[4].clone(),
            ],
            bias: [
                tensors[5].clone(),
                tensors[6].clone(),
                tensors[7].clone(),
                tensors[8].clone(),
            ],
            factor: [tensors[9].clone(), tensors[10].clone(), tensors[11].clone()],
        };
        let out = values.pmf_tensor(&tensors[0]);
        t.custom(
            &inputs,
            out,
            Arc::new(FactorizedPmfOp {
                channels: self.channels,
            }),
        )
    }
}

/// Plain parameter snapshot used by both evaluation paths.
struct DensityValues<E: Element> {
    channels: usize,
    h_raw: [Tensor<E>; LAYERS],
    bias: [Tensor<E>; LAYERS],
    factor: [Tensor<E>; LAYERS - 1],
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

impl<E: Element> DensityValues<E> {
    /// Forward pass of the monotone network before the final sigmoid.
    /// Stores per-layer pre-activations in `pre` and post-activations in
    /// `post` when provided (for the backward pass).
    fn logits(&self, ch: usize, x: f64, mut trace: Option<(&mut Vec<Vec<f64>>, &mut Vec<Vec<f64>>)>) -> f64 {
        let mut u = vec![x];
        for layer in 0..LAYERS {
            let (inw, outw) = (FILTERS[layer], FILTERS[layer + 1]);
            let h = self.h_raw[layer].data();
            let b = self.bias[layer].data();
            let mut v = vec![0.0f64; outw];
            for j in 0..outw {
                let mut acc = b[ch * outw + j].as_f64();
                for (l, &ul) in u.iter().enumerate().take(inw) {
                    acc += softplus(h[(ch * outw + j) * inw + l].as_f64()) * ul;
                }
                v[j] = acc;
            }
            if let Some((pre, _)) = trace.as_mut() {
                pre.push(v.clone());
            }
            if layer + 1 < LAYERS {
                let a = self.factor[layer].data();
                let mut nu = vec![0.0f64; outw];
                for j in 0..outw {
                    let gate = a[ch * outw + j].as_f64().tanh();
                    nu[j] = v[j] + gate * v[j].tanh();
                }
                if let Some((_, post)) = trace.as_mut() {
                    post.push(nu.clone());
                }
                u = nu;
            } else {
                u = v;
            }
        }
        u[0]
    }

    fn cumulative(&self, ch: usize, x: f64) -> f64 {
        sigmoid(self.logits(ch, x, None))
    }

    fn pmf_tensor(&self, z: &Tensor<E>) -> Tensor<E> {
        let (b, c, h, w) = z.dims4().expect("factorized pmf input must be 4-D");
        assert_eq!(c, self.channels, "factorized density channel mismatch");
        let plane = h * w;
        let mut out = Tensor::zeros(z.shape().to_vec());
        {
            let dst = out.data_mut();
            for (i, &zv) in z.data().iter().enumerate() {
                let ch = (i / plane) % c;
                let _ = b;
                let x = zv.as_f64();
                let p = self.cumulative(ch, x + 0.5) - self.cumulative(ch, x - 0.5);
                dst[i] = E::from_f64(p.max(PROB_FLOOR));
            }
        }
        out
    }

    /// Gradient of c(x) for one evaluation point: returns dc/dx and
    /// accumulates dc/dparam (scaled by `seed`) into the gradient buffers.
    #[allow(clippy::too_many_arguments)]
    fn backprop_point(
        &self,
        ch: usize,
        x: f64,
        seed: f64,
        gh: &mut [Vec<f64>],
        gb: &mut [Vec<f64>],
        ga: &mut [Vec<f64>],
    ) -> f64 {
        let mut pre = Vec::with_capacity(LAYERS);
        let mut post = Vec::with_capacity(LAYERS - 1);
        let y = self.logits(ch, x, Some((&mut pre, &mut post)));
        let s = sigmoid(y);
        // d sigmoid = s(1-s); chain the seed through the final logit
        let mut dv = vec![seed * s * (1.0 - s)];

        // walk layers in reverse; dv holds d(loss)/d(v_layer) entering each
        for layer in (0..LAYERS).rev() {
            let (inw, outw) = (FILTERS[layer], FILTERS[layer + 1]);
            // gate backward: v was transformed as u = v + tanh(a)*tanh(v)
            // for hidden layers; dv currently refers to d/d(u). Convert to
            // d/d(v) and take the gate-parameter gradient.
            let mut d_pre = vec![0.0f64; outw];
            if layer + 1 < LAYERS {
                let a = self.factor[layer].data();
                for j in 0..outw {
                    let av = a[ch * outw + j].as_f64();
                    let gate = av.tanh();
                    let th_v = pre[layer][j].tanh();
                    d_pre[j] = dv[j] * (1.0 + gate * (1.0 - th_v * th_v));
                    // d u / d a = tanh(v) * (1 - tanh(a)^2)
                    ga[layer][ch * outw + j] += dv[j] * th_v * (1.0 - gate * gate);
                }
            } else {
                d_pre.copy_from_slice(&dv);
            }

            // affine backward: v_j = sum_l softplus(h_jl) * u_l + b_j
            let u_prev: Vec<f64> = if layer == 0 {
                vec![x]
            } else {
                post[layer - 1].clone()
            };
            let h = self.h_raw[layer].data();
            let mut du = vec![0.0f64; inw];
            for j in 0..outw {
                gb[layer][ch * outw + j] += d_pre[j];
                for l in 0..inw {
                    let raw = h[(ch * outw + j) * inw + l].as_f64();
                    let sp = softplus(raw);
                    gh[layer][(ch * outw + j) * inw + l] += d_pre[j] * u_prev[l] * sigmoid(raw);
                    du[l] += d_pre[j] * sp;
                }
            }
            dv = du;
        }
        dv[0]
    }
}

struct FactorizedPmfOp {
    channels: usize,
}

impl<E: Element> CustomOp<E> for FactorizedPmfOp {
    fn name(&self) -> &'static str {
        "factorized_pmf"
    }

    fn backward(
        &self,
        grad_out: &Tensor<E>,
        out_value: &Tensor<E>,
        inputs: &[Tensor<E>],
    ) -> Vec<Option<Tensor<E>>> {
        let z = &inputs[0];
        let values = DensityValues {
            channels: self.channels,
            h_raw: [
                inputs[1].clone(),
                inputs[2].clone(),
                inputs[3].clone(),
                inputs[4].clone(),
            ],
            bias: [
                inputs[5].clone(),
                inputs[6].clone(),
                inputs[7].clone(),
                inputs[8].clone(),
            ],
            factor: [inputs[9].clone(), inputs[10].clone(), inputs[11].clone()],
        };
        let (_b, c, h, w) = z.dims4().unwrap();
        let plane = h * w;

        let mut gh: Vec<Vec<f64>> = (0..LAYERS)
            .map(|i| vec![0.0; inputs[1 + i].numel()])
            .collect();
        let mut gb: Vec<Vec<f64>> = (0..LAYERS)
            .map(|i| vec![0.0; inputs[5 + i].numel()])
            .collect();
        let mut ga: Vec<Vec<f64>> = (0..LAYERS - 1)
            .map(|i| vec![0.0; inputs[9 + i].numel()])
            .collect();
        let mut gz = vec![0.0f64; z.numel()];

        for (i, &zv) in z.data().iter().enumerate() {
            let gseed = grad_out.data()[i].as_f64();
            if gseed == 0.0 {
                continue;
            }
            // the floor zeroes the local gradient
            if out_value.data()[i].as_f64() <= PROB_FLOOR {
                continue;
            }
            let ch = (i / plane) % c;
            let x = zv.as_f64();
            let dx_hi = values.backprop_point(ch, x + 0.5, gseed, &mut gh, &mut gb, &mut ga);
            // lower edge enters with negative sign
            let dx_lo = values.backprop_point(ch, x - 0.5, -gseed, &mut gh, &mut gb, &mut ga);
            gz[i] = dx_hi + dx_lo;
        }

        let to_tensor = |shape: &[usize], data: Vec<f64>| -> Option<Tensor<E>> {
            Some(Tensor::new(
                shape.to_vec(),
                data.into_iter().map(E::from_f64).collect(),
            )
            .unwrap())
        };
        let mut grads: Vec<Option<Tensor<E>>> = Vec::with_capacity(inputs.len());
        grads.push(to_tensor(z.shape(), gz));
        for (i, g) in gh.into_iter().enumerate() {
            grads.push(to_tensor(inputs[1 + i].shape(), g));
        }
        for (i, g) in gb.into_iter().enumerate() {
            grads.push(to_tensor(inputs[5 + i].shape(), g));
        }
        for (i, g) in ga.into_iter().enumerate() {
            grads.push(to_tensor(inputs[9 + i].shape(), g));
        }
        grads
    }
}

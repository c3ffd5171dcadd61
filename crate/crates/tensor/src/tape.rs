//! Reverse-mode autodiff over a single-threaded operation tape.
//!
//! A [`Tape`] records every forward op together with its input handles;
//! [`Tape::backward`] walks the record in reverse and accumulates
//! gradients for every reachable node. Tapes are cheap, per-step objects:
//! training builds one per iteration, inference builds one and ignores
//! gradients.

use std::cell::RefCell;
use std::sync::Arc;

use crate::element::Element;
use crate::error::{Result, TensorError};
use crate::kernels::{self, ConvGeom, ConvTGeom};
use crate::tensor::Tensor;

/// Handle to a value recorded on a tape.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct TVar {
    pub(crate) id: usize,
}

impl TVar {
    pub fn id(&self) -> usize {
        self.id
    }
}

/// Elementwise nonlinearities. Leaky ReLU uses a fixed 0.2 slope.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Activation {
    LeakyRelu,
    Relu,
    Tanh,
    Softplus,
    Exp,
    Sigmoid,
}

pub const LEAKY_SLOPE: f64 = 0.2;

/// Spatial mask families for masked convolutions. Type A zeroes the center
/// tap and everything after it in raster order.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum MaskKind {
    A,
}

/// An op whose backward pass is supplied by the caller. `inputs` receives
/// the recorded input values in registration order; the returned vector
/// holds one optional gradient per input (same order, same shapes).
pub trait CustomOp<E: Element>: Send + Sync {
    fn name(&self) -> &'static str;
    fn backward(
        &self,
        grad_out: &Tensor<E>,
        out_value: &Tensor<E>,
        inputs: &[Tensor<E>],
    ) -> Vec<Option<Tensor<E>>>;
}

enum Op<E: Element> {
    Leaf,
    Conv2d {
        x: TVar,
        k: TVar,
        geom: ConvGeom,
    },
    ConvT2d {
        x: TVar,
        k: TVar,
        geom: ConvTGeom,
    },
    MaskedConv2d {
        x: TVar,
        k: TVar,
        taps: Arc<Vec<(usize, usize)>>,
    },
    BiasAdd {
        x: TVar,
        b: TVar,
    },
    Add {
        a: TVar,
        b: TVar,
    },
    Sub {
        a: TVar,
        b: TVar,
    },
    Mul {
        a: TVar,
        b: TVar,
    },
    Div {
        a: TVar,
        b: TVar,
    },
    Maximum {
        a: TVar,
        b: TVar,
    },
    Neg {
        x: TVar,
    },
    AddScalar {
        x: TVar,
    },
    MulScalar {
        x: TVar,
        c: E,
    },
    Act {
        x: TVar,
        kind: Activation,
    },
    Erf {
        x: TVar,
    },
    Ln {
        x: TVar,
    },
    PowScalar {
        x: TVar,
        p: E,
    },
    Clamp {
        x: TVar,
        lo: E,
        hi: E,
    },
    SliceChannels {
        x: TVar,
        c0: usize,
        c1: usize,
    },
    ConcatChannels {
        a: TVar,
        b: TVar,
    },
    SliceSpatial {
        x: TVar,
    },
    AvgPool2 {
        x: TVar,
    },
    FilterRows {
        x: TVar,
        taps: Arc<Vec<E>>,
    },
    FilterCols {
        x: TVar,
        taps: Arc<Vec<E>>,
    },
    Sum {
        x: TVar,
    },
    Custom {
        inputs: Vec<TVar>,
        op: Arc<dyn CustomOp<E>>,
    },
}

struct Node<E: Element> {
    value: Tensor<E>,
    op: Op<E>,
}

/// Gradients produced by [`Tape::backward`], indexed by [`TVar`].
pub struct Gradients<E: Element> {
    grads: Vec<Option<Tensor<E>>>,
}

impl<E: Element> Gradients<E> {
    pub fn get(&self, v: TVar) -> Option<&Tensor<E>> {
        self.grads.get(v.id).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: TVar) -> Option<Tensor<E>> {
        self.grads.get_mut(v.id).and_then(|g| g.take())
    }
}

pub struct Tape<E: Element> {
    nodes: RefCell<Vec<Node<E>>>,
}

impl<E: Element> Default for Tape<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E: Element> Tape<E> {
    pub fn new() -> Self {
        Self {
            nodes: RefCell::new(Vec::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Register an input value (parameter or data) on the tape.
    pub fn leaf(&self, value: Tensor<E>) -> TVar {
        self.push(value, Op::Leaf)
    }

    /// Current value of a recorded node (cheap clone).
    pub fn value(&self, v: TVar) -> Tensor<E> {
        self.nodes.borrow()[v.id].value.clone()
    }

    pub fn shape(&self, v: TVar) -> Vec<usize> {
        self.nodes.borrow()[v.id].value.shape().to_vec()
    }

    fn push(&self, value: Tensor<E>, op: Op<E>) -> TVar {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { value, op });
        TVar {
            id: nodes.len() - 1,
        }
    }

    fn val(&self, v: TVar) -> Tensor<E> {
        self.nodes.borrow()[v.id].value.clone()
    }

    // ── convolution ops ────────────────────────────────────────────────

    pub fn conv2d(&self, x: TVar, k: TVar, stride: usize, pad: usize) -> TVar {
        let xv = self.val(x);
        let kv = self.val(k);
        let (b, cin, h, w) = xv.dims4().expect("conv2d input must be 4-D");
        let (cout, kcin, kh, kw) = kv.dims4().expect("conv2d kernel must be 4-D");
        assert_eq!(cin, kcin, "conv2d channel mismatch: input {cin}, kernel {kcin}");
        let geom = ConvGeom {
            batch: b,
            cin,
            h,
            w,
            cout,
            kh,
            kw,
            stride,
            pad,
        };
        assert!(geom.is_valid(), "conv2d geometry invalid: {geom:?}");
        let (ho, wo) = geom.out_hw();
        let mut out = Tensor::zeros(vec![b, cout, ho, wo]);
        kernels::conv2d_fwd(xv.data(), kv.data(), out.data_mut(), &geom);
        self.push(out, Op::Conv2d { x, k, geom })
    }

    pub fn conv2d_transpose(
        &self,
        x: TVar,
        k: TVar,
        stride: usize,
        pad: usize,
        out_pad: usize,
    ) -> TVar {
        let xv = self.val(x);
        let kv = self.val(k);
        let (b, cin, h, w) = xv.dims4().expect("conv2d_transpose input must be 4-D");
        let (kcin, cout, kh, kw) = kv.dims4().expect("conv2d_transpose kernel must be 4-D");
        assert_eq!(cin, kcin, "conv2d_transpose channel mismatch");
        let geom = ConvTGeom {
            batch: b,
            cin,
            h,
            w,
            cout,
            kh,
            kw,
            stride,
            pad,
            out_pad,
        };
        assert!(geom.is_valid(), "conv2d_transpose geometry invalid: {geom:?}");
        let (ho, wo) = geom.out_hw();
        let mut out = Tensor::zeros(vec![b, cout, ho, wo]);
        kernels::convt_fwd(xv.data(), kv.data(), out.data_mut(), &geom);
        self.push(out, Op::ConvT2d { x, k, geom })
    }

    /// Masked stride-1 convolution with `kh/2` padding; output causally
    /// independent of the current and raster-future input positions.
    pub fn masked_conv2d(&self, x: TVar, k: TVar, _mask: MaskKind) -> TVar {
        let xv = self.val(x);
        let kv = self.val(k);
        let (b, cin, h, w) = xv.dims4().expect("masked_conv2d input must be 4-D");
        let (cout, kcin, kh, kw) = kv.dims4().expect("masked_conv2d kernel must be 4-D");
        assert_eq!(cin, kcin, "masked_conv2d channel mismatch");
        assert!(kh % 2 == 1 && kw % 2 == 1, "masked_conv2d kernel must be odd, got {kh}x{kw}");
        let taps = Arc::new(kernels::type_a_taps(kh, kw));
        let mut out = Tensor::zeros(vec![b, cout, h, w]);
        kernels::masked_conv_fwd(xv.data(), kv.data(), &taps, out.data_mut(), b, cin, cout, h, w, kh, kw);
        self.push(out, Op::MaskedConv2d { x, k, taps })
    }

    /// Add a per-channel bias `b` of shape (C) to a (B, C, H, W) tensor.
    pub fn bias_add(&self, x: TVar, b: TVar) -> TVar {
        let xv = self.val(x);
        let bv = self.val(b);
        let (_bn, c, h, w) = xv.dims4().expect("bias_add input must be 4-D");
        assert_eq!(bv.shape(), [c], "bias shape {:?} != ({c})", bv.shape());
        let mut out = xv.clone();
        let data = out.data_mut();
        let plane = h * w;
        for (i, v) in data.iter_mut().enumerate() {
            let ch = (i / plane) % c;
            *v += bv.data()[ch];
        }
        self.push(out, Op::BiasAdd { x, b })
    }

    // ── elementwise ops ────────────────────────────────────────────────

    fn binary(&self, a: TVar, b: TVar, f: impl Fn(E, E) -> E, op: Op<E>) -> TVar {
        let av = self.val(a);
        let bv = self.val(b);
        let out = av.zip(&bv, f).expect("elementwise shape mismatch");
        self.push(out, op)
    }

    pub fn add(&self, a: TVar, b: TVar) -> TVar {
        self.binary(a, b, |x, y| x + y, Op::Add { a, b })
    }

    pub fn sub(&self, a: TVar, b: TVar) -> TVar {
        self.binary(a, b, |x, y| x - y, Op::Sub { a, b })
    }

    pub fn mul(&self, a: TVar, b: TVar) -> TVar {
        self.binary(a, b, |x, y| x * y, Op::Mul { a, b })
    }

    pub fn div(&self, a: TVar, b: TVar) -> TVar {
        self.binary(a, b, |x, y| x / y, Op::Div { a, b })
    }

    pub fn maximum(&self, a: TVar, b: TVar) -> TVar {
        self.binary(a, b, |x, y| if x >= y { x } else { y }, Op::Maximum { a, b })
    }

    pub fn neg(&self, x: TVar) -> TVar {
        let out = self.val(x).map(|v| -v);
        self.push(out, Op::Neg { x })
    }

    pub fn add_scalar(&self, x: TVar, c: E) -> TVar {
        let out = self.val(x).map(|v| v + c);
        self.push(out, Op::AddScalar { x })
    }

    pub fn mul_scalar(&self, x: TVar, c: E) -> TVar {
        let out = self.val(x).map(|v| v * c);
        self.push(out, Op::MulScalar { x, c })
    }

    pub fn activation(&self, x: TVar, kind: Activation) -> TVar {
        let out = self.val(x).map(|v| activation_fwd(v, kind));
        self.push(out, Op::Act { x, kind })
    }

    pub fn leaky_relu(&self, x: TVar) -> TVar {
        self.activation(x, Activation::LeakyRelu)
    }

    pub fn exp(&self, x: TVar) -> TVar {
        self.activation(x, Activation::Exp)
    }

    pub fn erf(&self, x: TVar) -> TVar {
        let out = self.val(x).map(|v| v.erf());
        self.push(out, Op::Erf { x })
    }

    pub fn ln(&self, x: TVar) -> TVar {
        let out = self.val(x).map(|v| v.ln());
        self.push(out, Op::Ln { x })
    }

    /// Elementwise `x^p` for strictly positive `x`.
    pub fn powf(&self, x: TVar, p: E) -> TVar {
        let out = self.val(x).map(|v| v.powf(p));
        self.push(out, Op::PowScalar { x, p })
    }

    pub fn clamp(&self, x: TVar, lo: E, hi: E) -> TVar {
        let out = self.val(x).map(|v| if v < lo { lo } else if v > hi { hi } else { v });
        self.push(out, Op::Clamp { x, lo, hi })
    }

    pub fn clamp_min(&self, x: TVar, lo: E) -> TVar {
        self.clamp(x, lo, E::infinity())
    }

    // ── shape ops ──────────────────────────────────────────────────────

    /// Channels `c0..c1` of a (B, C, H, W) tensor.
    pub fn slice_channels(&self, x: TVar, c0: usize, c1: usize) -> TVar {
        let xv = self.val(x);
        let (b, c, h, w) = xv.dims4().expect("slice_channels input must be 4-D");
        assert!(c0 < c1 && c1 <= c, "slice_channels {c0}..{c1} out of {c}");
        let cs = c1 - c0;
        let plane = h * w;
        let mut out = Tensor::zeros(vec![b, cs, h, w]);
        {
            let dst = out.data_mut();
            let src = xv.data();
            for bi in 0..b {
                let s0 = (bi * c + c0) * plane;
                let d0 = bi * cs * plane;
                dst[d0..d0 + cs * plane].copy_from_slice(&src[s0..s0 + cs * plane]);
            }
        }
        self.push(out, Op::SliceChannels { x, c0, c1 })
    }

    /// Concatenate two (B, *, H, W) tensors along the channel axis.
    pub fn concat_channels(&self, a: TVar, b: TVar) -> TVar {
        let av = self.val(a);
        let bv = self.val(b);
        let (ba, ca, ha, wa) = av.dims4().expect("concat_channels input must be 4-D");
        let (bb, cb, hb, wb) = bv.dims4().expect("concat_channels input must be 4-D");
        assert_eq!((ba, ha, wa), (bb, hb, wb), "concat_channels spatial/batch mismatch");
        let plane = ha * wa;
        let mut out = Tensor::zeros(vec![ba, ca + cb, ha, wa]);
        {
            let dst = out.data_mut();
            for bi in 0..ba {
                let d0 = bi * (ca + cb) * plane;
                dst[d0..d0 + ca * plane].copy_from_slice(&av.data()[bi * ca * plane..(bi + 1) * ca * plane]);
                dst[d0 + ca * plane..d0 + (ca + cb) * plane]
                    .copy_from_slice(&bv.data()[bi * cb * plane..(bi + 1) * cb * plane]);
            }
        }
        self.push(out, Op::ConcatChannels { a, b })
    }

    /// Top-left spatial crop to (h, w).
    pub fn slice_spatial(&self, x: TVar, h: usize, w: usize) -> TVar {
        let xv = self.val(x);
        let (b, c, hin, win) = xv.dims4().expect("slice_spatial input must be 4-D");
        assert!(h <= hin && w <= win, "slice_spatial ({h},{w}) exceeds ({hin},{win})");
        let mut out = Tensor::zeros(vec![b, c, h, w]);
        {
            let dst = out.data_mut();
            let src = xv.data();
            for p in 0..b * c {
                for y in 0..h {
                    let s0 = (p * hin + y) * win;
                    let d0 = (p * h + y) * w;
                    dst[d0..d0 + w].copy_from_slice(&src[s0..s0 + w]);
                }
            }
        }
        self.push(out, Op::SliceSpatial { x })
    }

    pub fn avg_pool2(&self, x: TVar) -> TVar {
        let xv = self.val(x);
        let (b, c, h, w) = xv.dims4().expect("avg_pool2 input must be 4-D");
        assert!(h >= 2 && w >= 2, "avg_pool2 needs at least 2x2 input");
        let mut out = Tensor::zeros(vec![b, c, h / 2, w / 2]);
        kernels::avg_pool2_fwd(xv.data(), out.data_mut(), b * c, h, w);
        self.push(out, Op::AvgPool2 { x })
    }

    /// Horizontal valid correlation with constant taps (per channel).
    pub fn filter_rows(&self, x: TVar, taps: &[E]) -> TVar {
        let xv = self.val(x);
        let (b, c, h, w) = xv.dims4().expect("filter_rows input must be 4-D");
        assert!(taps.len() >= 1 && taps.len() <= w);
        let mut out = Tensor::zeros(vec![b, c, h, w - taps.len() + 1]);
        kernels::filter_rows_fwd(xv.data(), taps, out.data_mut(), b * c, h, w);
        self.push(
            out,
            Op::FilterRows {
                x,
                taps: Arc::new(taps.to_vec()),
            },
        )
    }

    /// Vertical valid correlation with constant taps (per channel).
    pub fn filter_cols(&self, x: TVar, taps: &[E]) -> TVar {
        let xv = self.val(x);
        let (b, c, h, w) = xv.dims4().expect("filter_cols input must be 4-D");
        assert!(taps.len() >= 1 && taps.len() <= h);
        let mut out = Tensor::zeros(vec![b, c, h - taps.len() + 1, w]);
        kernels::filter_cols_fwd(xv.data(), taps, out.data_mut(), b * c, h, w);
        self.push(
            out,
            Op::FilterCols {
                x,
                taps: Arc::new(taps.to_vec()),
            },
        )
    }

    /// Sum of all elements, as a rank-0 tensor.
    pub fn sum(&self, x: TVar) -> TVar {
        let s = self.val(x).sum();
        self.push(Tensor::scalar(s), Op::Sum { x })
    }

    /// Mean of all elements.
    pub fn mean(&self, x: TVar) -> TVar {
        let n = self.val(x).numel();
        let s = self.sum(x);
        self.mul_scalar(s, E::from_f64(1.0 / n as f64))
    }

    /// Record an externally computed op with a caller-supplied backward.
    pub fn custom(&self, inputs: &[TVar], value: Tensor<E>, op: Arc<dyn CustomOp<E>>) -> TVar {
        self.push(
            value,
            Op::Custom {
                inputs: inputs.to_vec(),
                op,
            },
        )
    }

    // ── backward ───────────────────────────────────────────────────────

    /// Reverse sweep from a scalar loss. Returns per-node gradients for
    /// every node that participates in the loss.
    pub fn backward(&self, loss: TVar) -> Result<Gradients<E>> {
        let nodes = self.nodes.borrow();
        let loss_node = nodes
            .get(loss.id)
            .unwrap_or_else(|| panic!("backward on a variable from another tape"));
        if loss_node.value.numel() != 1 {
            return Err(TensorError::NotScalar {
                shape: loss_node.value.shape().to_vec(),
            });
        }
        let mut grads: Vec<Option<Tensor<E>>> = (0..nodes.len()).map(|_| None).collect();
        grads[loss.id] = Some(Tensor::full(loss_node.value.shape().to_vec(), E::one()));

        for id in (0..=loss.id).rev() {
            let Some(g) = grads[id].clone() else { continue };
            let node = &nodes[id];
            match &node.op {
                Op::Leaf => {}
                Op::Conv2d { x, k, geom } => {
                    let xv = &nodes[x.id].value;
                    let kv = &nodes[k.id].value;
                    let mut gx = Tensor::zeros(xv.shape().to_vec());
                    kernels::conv2d_bwd_input(g.data(), kv.data(), gx.data_mut(), geom);
                    accum(&mut grads[x.id], gx);
                    let mut gk = Tensor::zeros(kv.shape().to_vec());
                    kernels::conv2d_bwd_kernel(g.data(), xv.data(), gk.data_mut(), geom);
                    accum(&mut grads[k.id], gk);
                }
                Op::ConvT2d { x, k, geom } => {
                    let xv = &nodes[x.id].value;
                    let kv = &nodes[k.id].value;
                    let mut gx = Tensor::zeros(xv.shape().to_vec());
                    kernels::convt_bwd_input(g.data(), kv.data(), gx.data_mut(), geom);
                    accum(&mut grads[x.id], gx);
                    let mut gk = Tensor::zeros(kv.shape().to_vec());
                    kernels::convt_bwd_kernel(g.data(), xv.data(), gk.data_mut(), geom);
                    accum(&mut grads[k.id], gk);
                }
                Op::MaskedConv2d { x, k, taps } => {
                    let xv = &nodes[x.id].value;
                    let kv = &nodes[k.id].value;
                    let (b, cin, h, w) = xv.dims4().unwrap();
                    let (cout, _, kh, kw) = kv.dims4().unwrap();
                    let mut gx = Tensor::zeros(xv.shape().to_vec());
                    kernels::masked_conv_bwd_input(g.data(), kv.data(), taps, gx.data_mut(), b, cin, cout, h, w, kh, kw);
                    accum(&mut grads[x.id], gx);
                    let mut gk = Tensor::zeros(kv.shape().to_vec());
                    kernels::masked_conv_bwd_kernel(g.data(), xv.data(), taps, gk.data_mut(), b, cin, cout, h, w, kh, kw);
                    accum(&mut grads[k.id], gk);
                }
                Op::BiasAdd { x, b } => {
                    accum(&mut grads[x.id], g.clone());
                    let bv = &nodes[b.id].value;
                    let c = bv.numel();
                    let (_bn, _c, h, w) = nodes[x.id].value.dims4().unwrap();
                    let plane = h * w;
                    let mut gb = Tensor::zeros(vec![c]);
                    {
                        let gbd = gb.data_mut();
                        for (i, &gv) in g.data().iter().enumerate() {
                            gbd[(i / plane) % c] += gv;
                        }
                    }
                    accum(&mut grads[b.id], gb);
                }
                Op::Add { a, b } => {
                    accum(&mut grads[a.id], g.clone());
                    accum(&mut grads[b.id], g.clone());
                }
                Op::Sub { a, b } => {
                    accum(&mut grads[a.id], g.clone());
                    accum(&mut grads[b.id], g.map(|v| -v));
                }
                Op::Mul { a, b } => {
                    let av = nodes[a.id].value.clone();
                    let bv = nodes[b.id].value.clone();
                    accum(&mut grads[a.id], g.zip(&bv, |gv, v| gv * v).unwrap());
                    accum(&mut grads[b.id], g.zip(&av, |gv, v| gv * v).unwrap());
                }
                Op::Div { a, b } => {
                    let av = nodes[a.id].value.clone();
                    let bv = nodes[b.id].value.clone();
                    accum(&mut grads[a.id], g.zip(&bv, |gv, v| gv / v).unwrap());
                    let mut gb = g.zip(&av, |gv, v| gv * v).unwrap();
                    gb = gb.zip(&bv, |gv, v| -gv / (v * v)).unwrap();
                    accum(&mut grads[b.id], gb);
                }
                Op::Maximum { a, b } => {
                    let av = nodes[a.id].value.clone();
                    let bv = nodes[b.id].value.clone();
                    let mask = av.zip(&bv, |x, y| if x >= y { E::one() } else { E::zero() }).unwrap();
                    accum(&mut grads[a.id], g.zip(&mask, |gv, m| gv * m).unwrap());
                    accum(&mut grads[b.id], g.zip(&mask, |gv, m| gv * (E::one() - m)).unwrap());
                }
                Op::Neg { x } => accum(&mut grads[x.id], g.map(|v| -v)),
                Op::AddScalar { x } => accum(&mut grads[x.id], g.clone()),
                Op::MulScalar { x, c } => {
                    let c = *c;
                    accum(&mut grads[x.id], g.map(|v| v * c));
                }
                Op::Act { x, kind } => {
                    let xv = nodes[x.id].value.clone();
                    let yv = node.value.clone();
                    let gx = match kind {
                        Activation::LeakyRelu => {
                            let slope = E::from_f64(LEAKY_SLOPE);
                            g.zip(&xv, |gv, v| if v > E::zero() { gv } else { gv * slope }).unwrap()
                        }
                        Activation::Relu => g
                            .zip(&xv, |gv, v| if v > E::zero() { gv } else { E::zero() })
                            .unwrap(),
                        Activation::Tanh => g.zip(&yv, |gv, y| gv * (E::one() - y * y)).unwrap(),
                        Activation::Softplus => g.zip(&xv, |gv, v| gv * sigmoid(v)).unwrap(),
                        Activation::Exp => g.zip(&yv, |gv, y| gv * y).unwrap(),
                        Activation::Sigmoid => g.zip(&yv, |gv, y| gv * y * (E::one() - y)).unwrap(),
                    };
                    accum(&mut grads[x.id], gx);
                }
                Op::Erf { x } => {
                    let xv = nodes[x.id].value.clone();
                    let two_over_sqrt_pi = E::from_f64(2.0 / std::f64::consts::PI.sqrt());
                    accum(
                        &mut grads[x.id],
                        g.zip(&xv, |gv, v| gv * two_over_sqrt_pi * (-v * v).exp()).unwrap(),
                    );
                }
                Op::Ln { x } => {
                    let xv = nodes[x.id].value.clone();
                    accum(&mut grads[x.id], g.zip(&xv, |gv, v| gv / v).unwrap());
                }
                Op::PowScalar { x, p } => {
                    let p = *p;
                    let xv = nodes[x.id].value.clone();
                    accum(
                        &mut grads[x.id],
                        g.zip(&xv, |gv, v| gv * p * v.powf(p - E::one())).unwrap(),
                    );
                }
                Op::Clamp { x, lo, hi } => {
                    let (lo, hi) = (*lo, *hi);
                    let xv = nodes[x.id].value.clone();
                    accum(
                        &mut grads[x.id],
                        g.zip(&xv, |gv, v| if v >= lo && v <= hi { gv } else { E::zero() })
                            .unwrap(),
                    );
                }
                Op::SliceChannels { x, c0, c1 } => {
                    let xv = &nodes[x.id].value;
                    let (b, c, h, w) = xv.dims4().unwrap();
                    let plane = h * w;
                    let cs = c1 - c0;
                    let mut gx = Tensor::zeros(xv.shape().to_vec());
                    {
                        let dst = gx.data_mut();
                        for bi in 0..b {
                            let d0 = (bi * c + c0) * plane;
                            let s0 = bi * cs * plane;
                            dst[d0..d0 + cs * plane].copy_from_slice(&g.data()[s0..s0 + cs * plane]);
                        }
                    }
                    accum(&mut grads[x.id], gx);
                }
                Op::ConcatChannels { a, b } => {
                    let av = &nodes[a.id].value;
                    let bv = &nodes[b.id].value;
                    let (bn, ca, h, w) = av.dims4().unwrap();
                    let cb = bv.shape()[1];
                    let plane = h * w;
                    let mut ga = Tensor::zeros(av.shape().to_vec());
                    let mut gb = Tensor::zeros(bv.shape().to_vec());
                    {
                        let gad = ga.data_mut();
                        for bi in 0..bn {
                            let s0 = bi * (ca + cb) * plane;
                            gad[bi * ca * plane..(bi + 1) * ca * plane]
                                .copy_from_slice(&g.data()[s0..s0 + ca * plane]);
                        }
                    }
                    {
                        let gbd = gb.data_mut();
                        for bi in 0..bn {
                            let s0 = bi * (ca + cb) * plane + ca * plane;
                            gbd[bi * cb * plane..(bi + 1) * cb * plane]
                                .copy_from_slice(&g.data()[s0..s0 + cb * plane]);
                        }
                    }
                    accum(&mut grads[a.id], ga);
                    accum(&mut grads[b.id], gb);
                }
                Op::SliceSpatial { x } => {
                    let xv = &nodes[x.id].value;
                    let (b, c, hin, win) = xv.dims4().unwrap();
                    let (gb_, gc, h, w) = node.value.dims4().unwrap();
                    debug_assert_eq!((gb_, gc), (b, c));
                    let mut gx = Tensor::zeros(xv.shape().to_vec());
                    {
                        let dst = gx.data_mut();
                        for p in 0..b * c {
                            for y in 0..h {
                                let d0 = (p * hin + y) * win;
                                let s0 = (p * h + y) * w;
                                dst[d0..d0 + w].copy_from_slice(&g.data()[s0..s0 + w]);
                            }
                        }
                    }
                    accum(&mut grads[x.id], gx);
                }
                Op::AvgPool2 { x } => {
                    let xv = &nodes[x.id].value;
                    let (b, c, h, w) = xv.dims4().unwrap();
                    let mut gx = Tensor::zeros(xv.shape().to_vec());
                    kernels::avg_pool2_bwd(g.data(), gx.data_mut(), b * c, h, w);
                    accum(&mut grads[x.id], gx);
                }
                Op::FilterRows { x, taps } => {
                    let xv = &nodes[x.id].value;
                    let (b, c, h, w) = xv.dims4().unwrap();
                    let mut gx = Tensor::zeros(xv.shape().to_vec());
                    kernels::filter_rows_bwd(g.data(), taps, gx.data_mut(), b * c, h, w);
                    accum(&mut grads[x.id], gx);
                }
                Op::FilterCols { x, taps } => {
                    let xv = &nodes[x.id].value;
                    let (b, c, h, w) = xv.dims4().unwrap();
                    let mut gx = Tensor::zeros(xv.shape().to_vec());
                    kernels::filter_cols_bwd(g.data(), taps, gx.data_mut(), b * c, h, w);
                    accum(&mut grads[x.id], gx);
                }
                Op::Sum { x } => {
                    let xv = &nodes[x.id].value;
                    let gv = g.item();
                    accum(&mut grads[x.id], Tensor::full(xv.shape().to_vec(), gv));
                }
                Op::Custom { inputs, op } => {
                    let in_vals: Vec<Tensor<E>> =
                        inputs.iter().map(|v| nodes[v.id].value.clone()).collect();
                    let in_grads = op.backward(&g, &node.value, &in_vals);
                    assert_eq!(
                        in_grads.len(),
                        inputs.len(),
                        "custom op {} returned {} gradients for {} inputs",
                        op.name(),
                        in_grads.len(),
                        inputs.len()
                    );
                    for (v, gi) in inputs.iter().zip(in_grads) {
                        if let Some(gi) = gi {
                            assert_eq!(
                                gi.shape(),
                                nodes[v.id].value.shape(),
                                "custom op {} gradient shape mismatch",
                                op.name()
                            );
                            accum(&mut grads[v.id], gi);
                        }
                    }
                }
            }
        }
        Ok(Gradients { grads })
    }
}

fn accum<E: Element>(slot: &mut Option<Tensor<E>>, delta: Tensor<E>) {
    match slot {
        None => *slot = Some(delta),
        Some(t) => t.add_assign(&delta).expect("gradient shape mismatch"),
    }
}

#[inline]
pub fn sigmoid<E: Element>(x: E) -> E {
    if x >= E::zero() {
        E::one() / (E::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (E::one() + e)
    }
}

fn activation_fwd<E: Element>(v: E, kind: Activation) -> E {
    match kind {
        Activation::LeakyRelu => {
            if v > E::zero() {
                v
            } else {
                v * E::from_f64(LEAKY_SLOPE)
            }
        }
        Activation::Relu => {
            if v > E::zero() {
                v
            } else {
                E::zero()
            }
        }
        Activation::Tanh => v.tanh(),
        Activation::Softplus => {
            if v > E::zero() {
                v + (-v).exp().ln_1p()
            } else {
                v.exp().ln_1p()
            }
        }
        Activation::Exp => v.exp(),
        Activation::Sigmoid => sigmoid(v),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_backward_is_ones() {
        let t: Tape<f64> = Tape::new();
        let x = t.leaf(Tensor::from_fn(vec![2, 3], |i| i as f64));
        let loss = t.sum(x);
        let grads = t.backward(loss).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[1.0; 6]);
    }

    #[test]
    fn unused_leaf_has_no_grad() {
        let t: Tape<f64> = Tape::new();
        let x = t.leaf(Tensor::scalar(2.0));
        let y = t.leaf(Tensor::scalar(3.0));
        let loss = t.mul(x, x);
        let grads = t.backward(loss).unwrap();
        assert!(grads.get(y).is_none());
        assert_eq!(grads.get(x).unwrap().item(), 4.0);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let t: Tape<f64> = Tape::new();
        let x = t.leaf(Tensor::zeros(vec![2]));
        assert!(matches!(t.backward(x), Err(TensorError::NotScalar { .. })));
    }

    #[test]
    fn shared_subexpression_accumulates() {
        // loss = x*x + x*x = 2x^2, dloss/dx = 4x
        let t: Tape<f64> = Tape::new();
        let x = t.leaf(Tensor::scalar(3.0));
        let a = t.mul(x, x);
        let b = t.mul(x, x);
        let loss = t.add(a, b);
        let grads = t.backward(loss).unwrap();
        assert_eq!(grads.get(x).unwrap().item(), 12.0);
    }

    #[test]
    fn leaky_relu_at_zero_is_zero() {
        let t: Tape<f64> = Tape::new();
        let x = t.leaf(Tensor::scalar(0.0));
        let y = t.leaky_relu(x);
        assert_eq!(t.value(y).item(), 0.0);
    }

    #[test]
    fn softplus_positive_everywhere() {
        let t: Tape<f64> = Tape::new();
        for v in [-700.0, -5.0, 0.0, 5.0, 700.0] {
            let x = t.leaf(Tensor::scalar(v));
            let y = t.activation(x, Activation::Softplus);
            let out = t.value(y).item();
            assert!(out > 0.0 && out.is_finite(), "softplus({v}) = {out}");
        }
    }
}

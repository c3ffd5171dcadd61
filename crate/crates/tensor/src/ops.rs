//! Plain-tensor convolution entry points with checked geometry.
//!
//! The tape methods in [`crate::tape`] panic on misuse (model wiring is
//! validated at construction); these return errors instead and are the
//! checked surface used by oracles, benches and geometry validation.

use crate::element::Element;
use crate::error::{Result, TensorError};
use crate::kernels::{self, ConvGeom, ConvTGeom};
use crate::tensor::Tensor;

pub fn conv2d<E: Element>(x: &Tensor<E>, k: &Tensor<E>, stride: usize, pad: usize) -> Result<Tensor<E>> {
    let (b, cin, h, w) = x.dims4()?;
    let (cout, kcin, kh, kw) = k.dims4()?;
    if cin != kcin {
        return Err(TensorError::ChannelMismatch {
            expected: kcin,
            got: cin,
        });
    }
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
    if !geom.is_valid() {
        return Err(TensorError::BadGeometry {
            h,
            w,
            kh,
            kw,
            stride,
            pad,
        });
    }
    let (ho, wo) = geom.out_hw();
    let mut out = Tensor::zeros(vec![b, cout, ho, wo]);
    kernels::conv2d_fwd(x.data(), k.data(), out.data_mut(), &geom);
    Ok(out)
}

pub fn conv2d_transpose<E: Element>(
    x: &Tensor<E>,
    k: &Tensor<E>,
    stride: usize,
    pad: usize,
    out_pad: usize,
) -> Result<Tensor<E>> {
    let (b, cin, h, w) = x.dims4()?;
    let (kcin, cout, kh, kw) = k.dims4()?;
    if cin != kcin {
        return Err(TensorError::ChannelMismatch {
            expected: kcin,
            got: cin,
        });
    }
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
    if !geom.is_valid() {
        return Err(TensorError::BadGeometry {
            h,
            w,
            kh,
            kw,
            stride,
            pad,
        });
    }
    let (ho, wo) = geom.out_hw();
    let mut out = Tensor::zeros(vec![b, cout, ho, wo]);
    kernels::convt_fwd(x.data(), k.data(), out.data_mut(), &geom);
    Ok(out)
}

/// Type-A masked convolution (stride 1, kh/2 padding): each output position
/// depends only on input positions strictly before it in raster order.
pub fn masked_conv2d<E: Element>(x: &Tensor<E>, k: &Tensor<E>) -> Result<Tensor<E>> {
    let (b, cin, h, w) = x.dims4()?;
    let (cout, kcin, kh, kw) = k.dims4()?;
    if cin != kcin {
        return Err(TensorError::ChannelMismatch {
            expected: kcin,
            got: cin,
        });
    }
    if kh % 2 == 0 || kw % 2 == 0 {
        return Err(TensorError::EvenKernel { kh, kw });
    }
    let taps = kernels::type_a_taps(kh, kw);
    let mut out = Tensor::zeros(vec![b, cout, h, w]);
    kernels::masked_conv_fwd(x.data(), k.data(), &taps, out.data_mut(), b, cin, cout, h, w, kh, kw);
    Ok(out)
}

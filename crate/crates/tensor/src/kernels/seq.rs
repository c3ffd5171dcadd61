//! Always-sequential kernel entry points.
//!
//! These run the exact same per-plane workers as the dispatching functions
//! in the parent module, single-threaded regardless of the `parallel`
//! feature. They are the reference implementations the benches compare
//! against and the fallback used when the feature is disabled.

use super::*;
use crate::element::Element;

fn planes_seq<E, F>(buf: &mut [E], plane_len: usize, f: F)
where
    E: Element,
    F: Fn(usize, &mut [E]),
{
    if plane_len == 0 {
        return;
    }
    for (i, chunk) in buf.chunks_mut(plane_len).enumerate() {
        f(i, chunk);
    }
}

pub fn conv2d_fwd<E: Element>(x: &[E], k: &[E], out: &mut [E], g: &ConvGeom) {
    let (ho, wo) = g.out_hw();
    planes_seq(out, ho * wo, |plane, chunk| {
        conv2d_plane(x, k, chunk, plane / g.cout, plane % g.cout, g, ho, wo);
    });
}

pub fn conv2d_bwd_input<E: Element>(gout: &[E], k: &[E], gx: &mut [E], g: &ConvGeom) {
    let (ho, wo) = g.out_hw();
    planes_seq(gx, g.h * g.w, |plane, chunk| {
        conv2d_bwd_input_plane(gout, k, chunk, plane / g.cin, plane % g.cin, g, ho, wo);
    });
}

pub fn conv2d_bwd_kernel<E: Element>(gout: &[E], x: &[E], gk: &mut [E], g: &ConvGeom) {
    let (ho, wo) = g.out_hw();
    planes_seq(gk, g.kh * g.kw, |plane, chunk| {
        conv2d_bwd_kernel_plane(gout, x, chunk, plane / g.cin, plane % g.cin, g, ho, wo);
    });
}

pub fn convt_fwd<E: Element>(x: &[E], k: &[E], out: &mut [E], g: &ConvTGeom) {
    let (ho, wo) = g.out_hw();
    planes_seq(out, ho * wo, |plane, chunk| {
        convt_plane(x, k, chunk, plane / g.cout, plane % g.cout, g, ho, wo);
    });
}

pub fn convt_bwd_input<E: Element>(gout: &[E], k: &[E], gx: &mut [E], g: &ConvTGeom) {
    let (ho, wo) = g.out_hw();
    planes_seq(gx, g.h * g.w, |plane, chunk| {
        convt_bwd_input_plane(gout, k, chunk, plane / g.cin, plane % g.cin, g, ho, wo);
    });
}

pub fn convt_bwd_kernel<E: Element>(gout: &[E], x: &[E], gk: &mut [E], g: &ConvTGeom) {
    let (ho, wo) = g.out_hw();
    planes_seq(gk, g.kh * g.kw, |plane, chunk| {
        convt_bwd_kernel_plane(gout, x, chunk, plane / g.cout, plane % g.cout, g, ho, wo);
    });
}

#[allow(clippy::too_many_arguments)]
pub fn masked_conv_fwd<E: Element>(
    x: &[E],
    k: &[E],
    taps: &[(usize, usize)],
    out: &mut [E],
    _batch: usize,
    cin: usize,
    cout: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
) {
    planes_seq(out, h * w, |plane, chunk| {
        masked_conv_plane(x, k, taps, chunk, plane / cout, plane % cout, cin, h, w, kh, kw);
    });
}

//! Convolution and filtering kernels on flat row-major buffers.
//!
//! Every kernel is expressed as independent per-plane work items with a
//! fixed accumulation order per output element, so the rayon path in
//! [`self`] and the sequential path in [`seq`] produce bit-identical
//! results. The `parallel` feature (default) enables the rayon dispatch;
//! without it the public functions fall through to the sequential code.

pub mod seq;

use crate::element::Element;

/// Work (in multiply-adds) below which dispatch stays sequential.
const PAR_THRESHOLD: usize = 32_768;

/// Geometry of a strided cross-correlation (the `conv2d` op).
#[derive(Clone, Copy, Debug)]
pub struct ConvGeom {
    pub batch: usize,
    pub cin: usize,
    pub h: usize,
    pub w: usize,
    pub cout: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeom {
    pub fn out_hw(&self) -> (usize, usize) {
        let ho = (self.h + 2 * self.pad - self.kh) / self.stride + 1;
        let wo = (self.w + 2 * self.pad - self.kw) / self.stride + 1;
        (ho, wo)
    }

    pub fn is_valid(&self) -> bool {
        self.stride >= 1
            && self.h + 2 * self.pad >= self.kh
            && self.w + 2 * self.pad >= self.kw
            && self.kh >= 1
            && self.kw >= 1
    }

    fn macs(&self) -> usize {
        let (ho, wo) = self.out_hw();
        self.batch * self.cout * ho * wo * self.cin * self.kh * self.kw
    }
}

/// Geometry of a transposed convolution. Kernel layout is (cin, cout, kh, kw).
#[derive(Clone, Copy, Debug)]
pub struct ConvTGeom {
    pub batch: usize,
    pub cin: usize,
    pub h: usize,
    pub w: usize,
    pub cout: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub out_pad: usize,
}

impl ConvTGeom {
    pub fn out_hw(&self) -> (usize, usize) {
        let ho = (self.h - 1) * self.stride + self.kh + self.out_pad - 2 * self.pad;
        let wo = (self.w - 1) * self.stride + self.kw + self.out_pad - 2 * self.pad;
        (ho, wo)
    }

    pub fn is_valid(&self) -> bool {
        self.stride >= 1
            && self.out_pad < self.stride
            && (self.h - 1) * self.stride + self.kh + self.out_pad > 2 * self.pad
            && (self.w - 1) * self.stride + self.kw + self.out_pad > 2 * self.pad
    }

    fn macs(&self) -> usize {
        self.batch * self.cout * self.h * self.w * self.cin * self.kh * self.kw
    }
}

/// Spatial taps of a type-A causal mask: all positions strictly before the
/// center in raster order (the center itself is masked out).
pub fn type_a_taps(kh: usize, kw: usize) -> Vec<(usize, usize)> {
    let cy = kh / 2;
    let cx = kw / 2;
    let mut taps = Vec::new();
    for ky in 0..kh {
        for kx in 0..kw {
            if ky < cy || (ky == cy && kx < cx) {
                taps.push((ky, kx));
            }
        }
    }
    taps
}

/// Range of output columns `ox` with `0 <= ox*s + d < w` and `ox < wo`.
#[inline]
fn ox_range(w: usize, s: usize, d: isize, wo: usize) -> (usize, usize) {
    let lo = if d >= 0 {
        0
    } else {
        ((-d) as usize).div_ceil(s)
    };
    let hi_num = w as isize - 1 - d;
    if hi_num < 0 {
        return (0, 0);
    }
    let hi = (hi_num as usize / s + 1).min(wo);
    let lo = lo.min(hi);
    (lo, hi)
}

fn run_planes<E, F>(buf: &mut [E], plane_len: usize, total_work: usize, f: F)
where
    E: Element,
    F: Fn(usize, &mut [E]) + Sync,
{
    debug_assert!(plane_len == 0 || buf.len() % plane_len == 0);
    #[cfg(feature = "parallel")]
    {
        if plane_len > 0 && total_work >= PAR_THRESHOLD && rayon::current_num_threads() > 1 {
            use rayon::prelude::*;
            buf.par_chunks_mut(plane_len)
                .enumerate()
                .for_each(|(i, chunk)| f(i, chunk));
            return;
        }
    }
    let _ = total_work;
    if plane_len == 0 {
        return;
    }
    for (i, chunk) in buf.chunks_mut(plane_len).enumerate() {
        f(i, chunk);
    }
}

// ── per-plane workers (shared by seq and parallel paths) ────────────────────

/// One (batch, out-channel) plane of conv2d. `out_plane` must be zeroed.
#[inline]
fn conv2d_plane<E: Element>(
    x: &[E],
    k: &[E],
    out_plane: &mut [E],
    bi: usize,
    co: usize,
    g: &ConvGeom,
    ho: usize,
    wo: usize,
) {
    let p = g.pad as isize;
    for ci in 0..g.cin {
        let x_plane = &x[(bi * g.cin + ci) * g.h * g.w..][..g.h * g.w];
        let k_base = (co * g.cin + ci) * g.kh * g.kw;
        for ky in 0..g.kh {
            let krow = &k[k_base + ky * g.kw..][..g.kw];
            for oy in 0..ho {
                let iy = (oy * g.stride) as isize + ky as isize - p;
                if iy < 0 || iy >= g.h as isize {
                    continue;
                }
                let xrow = &x_plane[iy as usize * g.w..][..g.w];
                let orow = &mut out_plane[oy * wo..][..wo];
                for (kx, &kv) in krow.iter().enumerate() {
                    let d = kx as isize - p;
                    let (ox0, ox1) = ox_range(g.w, g.stride, d, wo);
                    if ox0 >= ox1 {
                        continue;
                    }
                    if g.stride == 1 {
                        let off = (ox0 as isize + d) as usize;
                        for (o, &xv) in orow[ox0..ox1].iter_mut().zip(&xrow[off..]) {
                            *o = *o + kv * xv;
                        }
                    } else {
                        for ox in ox0..ox1 {
                            let ix = (ox * g.stride) as isize + d;
                            orow[ox] = orow[ox] + kv * xrow[ix as usize];
                        }
                    }
                }
            }
        }
    }
}

/// One (batch, in-channel) plane of conv2d backward w.r.t. the input.
#[inline]
fn conv2d_bwd_input_plane<E: Element>(
    gout: &[E],
    k: &[E],
    gx_plane: &mut [E],
    bi: usize,
    ci: usize,
    g: &ConvGeom,
    ho: usize,
    wo: usize,
) {
    let p = g.pad as isize;
    for co in 0..g.cout {
        let g_plane = &gout[(bi * g.cout + co) * ho * wo..][..ho * wo];
        let k_base = (co * g.cin + ci) * g.kh * g.kw;
        for ky in 0..g.kh {
            let krow = &k[k_base + ky * g.kw..][..g.kw];
            for oy in 0..ho {
                let iy = (oy * g.stride) as isize + ky as isize - p;
                if iy < 0 || iy >= g.h as isize {
                    continue;
                }
                let grow = &g_plane[oy * wo..][..wo];
                let xrow = &mut gx_plane[iy as usize * g.w..][..g.w];
                for (kx, &kv) in krow.iter().enumerate() {
                    let d = kx as isize - p;
                    let (ox0, ox1) = ox_range(g.w, g.stride, d, wo);
                    for ox in ox0..ox1 {
                        let ix = ((ox * g.stride) as isize + d) as usize;
                        xrow[ix] = xrow[ix] + kv * grow[ox];
                    }
                }
            }
        }
    }
}

/// One (out-channel, in-channel) plane of conv2d backward w.r.t. the kernel.
#[inline]
fn conv2d_bwd_kernel_plane<E: Element>(
    gout: &[E],
    x: &[E],
    gk_plane: &mut [E],
    co: usize,
    ci: usize,
    g: &ConvGeom,
    ho: usize,
    wo: usize,
) {
    let p = g.pad as isize;
    for ky in 0..g.kh {
        for kx in 0..g.kw {
            let d = kx as isize - p;
            let mut acc = E::zero();
            for bi in 0..g.batch {
                let g_plane = &gout[(bi * g.cout + co) * ho * wo..][..ho * wo];
                let x_plane = &x[(bi * g.cin + ci) * g.h * g.w..][..g.h * g.w];
                for oy in 0..ho {
                    let iy = (oy * g.stride) as isize + ky as isize - p;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let grow = &g_plane[oy * wo..][..wo];
                    let xrow = &x_plane[iy as usize * g.w..][..g.w];
                    let (ox0, ox1) = ox_range(g.w, g.stride, d, wo);
                    if ox0 >= ox1 {
                        continue;
                    }
                    if g.stride == 1 {
                        let off = (ox0 as isize + d) as usize;
                        for (gv, &xv) in grow[ox0..ox1].iter().zip(&xrow[off..]) {
                            acc += *gv * xv;
                        }
                    } else {
                        for ox in ox0..ox1 {
                            let ix = ((ox * g.stride) as isize + d) as usize;
                            acc += grow[ox] * xrow[ix];
                        }
                    }
                }
            }
            gk_plane[ky * g.kw + kx] = acc;
        }
    }
}

/// One (batch, out-channel) plane of a transposed convolution.
#[inline]
fn convt_plane<E: Element>(
    x: &[E],
    k: &[E],
    out_plane: &mut [E],
    bi: usize,
    co: usize,
    g: &ConvTGeom,
    ho: usize,
    wo: usize,
) {
    let p = g.pad as isize;
    for ci in 0..g.cin {
        let x_plane = &x[(bi * g.cin + ci) * g.h * g.w..][..g.h * g.w];
        let k_base = (ci * g.cout + co) * g.kh * g.kw;
        for ky in 0..g.kh {
            let krow = &k[k_base + ky * g.kw..][..g.kw];
            for iy in 0..g.h {
                let oy = (iy * g.stride) as isize + ky as isize - p;
                if oy < 0 || oy >= ho as isize {
                    continue;
                }
                let xrow = &x_plane[iy * g.w..][..g.w];
                let orow = &mut out_plane[oy as usize * wo..][..wo];
                for (kx, &kv) in krow.iter().enumerate() {
                    let d = kx as isize - p;
                    let (ix0, ix1) = ox_range(wo, g.stride, d, g.w);
                    for ix in ix0..ix1 {
                        let ox = ((ix * g.stride) as isize + d) as usize;
                        orow[ox] = orow[ox] + kv * xrow[ix];
                    }
                }
            }
        }
    }
}

/// One (batch, in-channel) plane of transposed-conv backward w.r.t. input.
#[inline]
fn convt_bwd_input_plane<E: Element>(
    gout: &[E],
    k: &[E],
    gx_plane: &mut [E],
    bi: usize,
    ci: usize,
    g: &ConvTGeom,
    ho: usize,
    wo: usize,
) {
    let p = g.pad as isize;
    for co in 0..g.cout {
        let g_plane = &gout[(bi * g.cout + co) * ho * wo..][..ho * wo];
        let k_base = (ci * g.cout + co) * g.kh * g.kw;
        for ky in 0..g.kh {
            let krow = &k[k_base + ky * g.kw..][..g.kw];
            for iy in 0..g.h {
                let oy = (iy * g.stride) as isize + ky as isize - p;
                if oy < 0 || oy >= ho as isize {
                    continue;
                }
                let grow = &g_plane[oy as usize * wo..][..wo];
                let xrow = &mut gx_plane[iy * g.w..][..g.w];
                for (kx, &kv) in krow.iter().enumerate() {
                    let d = kx as isize - p;
                    let (ix0, ix1) = ox_range(wo, g.stride, d, g.w);
                    for ix in ix0..ix1 {
                        let ox = ((ix * g.stride) as isize + d) as usize;
                        xrow[ix] = xrow[ix] + kv * grow[ox];
                    }
                }
            }
        }
    }
}

/// One (in-channel, out-channel) plane of transposed-conv backward w.r.t. kernel.
#[inline]
fn convt_bwd_kernel_plane<E: Element>(
    gout: &[E],
    x: &[E],
    gk_plane: &mut [E],
    ci: usize,
    co: usize,
    g: &ConvTGeom,
    ho: usize,
    wo: usize,
) {
    let p = g.pad as isize;
    for ky in 0..g.kh {
        for kx in 0..g.kw {
            let d = kx as isize - p;
            let mut acc = E::zero();
            for bi in 0..g.batch {
                let g_plane = &gout[(bi * g.cout + co) * ho * wo..][..ho * wo];
                let x_plane = &x[(bi * g.cin + ci) * g.h * g.w..][..g.h * g.w];
                for iy in 0..g.h {
                    let oy = (iy * g.stride) as isize + ky as isize - p;
                    if oy < 0 || oy >= ho as isize {
                        continue;
                    }
                    let grow = &g_plane[oy as usize * wo..][..wo];
                    let xrow = &x_plane[iy * g.w..][..g.w];
                    let (ix0, ix1) = ox_range(wo, g.stride, d, g.w);
                    for ix in ix0..ix1 {
                        let ox = ((ix * g.stride) as isize + d) as usize;
                        acc += grow[ox] * xrow[ix];
                    }
                }
            }
            gk_plane[ky * g.kw + kx] = acc;
        }
    }
}

/// One (batch, out-channel) plane of the masked (type-A) convolution.
/// Stride 1, padding kh/2; only the taps strictly before the raster center
/// are ever read, so garbage beyond the current position cannot leak in.
#[inline]
fn masked_conv_plane<E: Element>(
    x: &[E],
    k: &[E],
    taps: &[(usize, usize)],
    out_plane: &mut [E],
    bi: usize,
    co: usize,
    cin: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
) {
    let py = (kh / 2) as isize;
    let px = (kw / 2) as isize;
    for ci in 0..cin {
        let x_plane = &x[(bi * cin + ci) * h * w..][..h * w];
        let k_base = (co * cin + ci) * kh * kw;
        for &(ky, kx) in taps {
            let kv = k[k_base + ky * kw + kx];
            let dy = ky as isize - py;
            let dx = kx as isize - px;
            for oy in 0..h {
                let iy = oy as isize + dy;
                if iy < 0 || iy >= h as isize {
                    continue;
                }
                let xrow = &x_plane[iy as usize * w..][..w];
                let orow = &mut out_plane[oy * w..][..w];
                let (ox0, ox1) = ox_range(w, 1, dx, w);
                if ox0 >= ox1 {
                    continue;
                }
                let off = (ox0 as isize + dx) as usize;
                for (o, &xv) in orow[ox0..ox1].iter_mut().zip(&xrow[off..]) {
                    *o = *o + kv * xv;
                }
            }
        }
    }
}

#[inline]
fn masked_conv_bwd_input_plane<E: Element>(
    gout: &[E],
    k: &[E],
    taps: &[(usize, usize)],
    gx_plane: &mut [E],
    bi: usize,
    ci: usize,
    cin: usize,
    cout: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
) {
    let py = (kh / 2) as isize;
    let px = (kw / 2) as isize;
    for co in 0..cout {
        let g_plane = &gout[(bi * cout + co) * h * w..][..h * w];
        let k_base = (co * cin + ci) * kh * kw;
        for &(ky, kx) in taps {
            let kv = k[k_base + ky * kw + kx];
            let dy = ky as isize - py;
            let dx = kx as isize - px;
            // gx[oy+dy][ox+dx] += kv * g[oy][ox]
            for oy in 0..h {
                let iy = oy as isize + dy;
                if iy < 0 || iy >= h as isize {
                    continue;
                }
                let grow = &g_plane[oy * w..][..w];
                let xrow = &mut gx_plane[iy as usize * w..][..w];
                let (ox0, ox1) = ox_range(w, 1, dx, w);
                for ox in ox0..ox1 {
                    let ix = (ox as isize + dx) as usize;
                    xrow[ix] = xrow[ix] + kv * grow[ox];
                }
            }
        }
    }
}

#[inline]
fn masked_conv_bwd_kernel_plane<E: Element>(
    gout: &[E],
    x: &[E],
    taps: &[(usize, usize)],
    gk_plane: &mut [E],
    co: usize,
    ci: usize,
    cin: usize,
    cout: usize,
    batch: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
) {
    let py = (kh / 2) as isize;
    let px = (kw / 2) as isize;
    for v in gk_plane.iter_mut() {
        *v = E::zero();
    }
    for &(ky, kx) in taps {
        let dy = ky as isize - py;
        let dx = kx as isize - px;
        let mut acc = E::zero();
        for bi in 0..batch {
            let g_plane = &gout[(bi * cout + co) * h * w..][..h * w];
            let x_plane = &x[(bi * cin + ci) * h * w..][..h * w];
            for oy in 0..h {
                let iy = oy as isize + dy;
                if iy < 0 || iy >= h as isize {
                    continue;
                }
                let grow = &g_plane[oy * w..][..w];
                let xrow = &x_plane[iy as usize * w..][..w];
                let (ox0, ox1) = ox_range(w, 1, dx, w);
                if ox0 >= ox1 {
                    continue;
                }
                let off = (ox0 as isize + dx) as usize;
                for (gv, &xv) in grow[ox0..ox1].iter().zip(&xrow[off..]) {
                    acc += *gv * xv;
                }
            }
        }
        gk_plane[ky * kw + kx] = acc;
    }
}

// ── public dispatch API ─────────────────────────────────────────────────────

pub fn conv2d_fwd<E: Element>(x: &[E], k: &[E], out: &mut [E], g: &ConvGeom) {
    let (ho, wo) = g.out_hw();
    run_planes(out, ho * wo, g.macs(), |plane, chunk| {
        let bi = plane / g.cout;
        let co = plane % g.cout;
        conv2d_plane(x, k, chunk, bi, co, g, ho, wo);
    });
}

pub fn conv2d_bwd_input<E: Element>(gout: &[E], k: &[E], gx: &mut [E], g: &ConvGeom) {
    let (ho, wo) = g.out_hw();
    run_planes(gx, g.h * g.w, g.macs(), |plane, chunk| {
        let bi = plane / g.cin;
        let ci = plane % g.cin;
        conv2d_bwd_input_plane(gout, k, chunk, bi, ci, g, ho, wo);
    });
}

pub fn conv2d_bwd_kernel<E: Element>(gout: &[E], x: &[E], gk: &mut [E], g: &ConvGeom) {
    let (ho, wo) = g.out_hw();
    run_planes(gk, g.kh * g.kw, g.macs(), |plane, chunk| {
        let co = plane / g.cin;
        let ci = plane % g.cin;
        conv2d_bwd_kernel_plane(gout, x, chunk, co, ci, g, ho, wo);
    });
}

pub fn convt_fwd<E: Element>(x: &[E], k: &[E], out: &mut [E], g: &ConvTGeom) {
    let (ho, wo) = g.out_hw();
    run_planes(out, ho * wo, g.macs(), |plane, chunk| {
        let bi = plane / g.cout;
        let co = plane % g.cout;
        convt_plane(x, k, chunk, bi, co, g, ho, wo);
    });
}

pub fn convt_bwd_input<E: Element>(gout: &[E], k: &[E], gx: &mut [E], g: &ConvTGeom) {
    let (ho, wo) = g.out_hw();
    run_planes(gx, g.h * g.w, g.macs(), |plane, chunk| {
        let bi = plane / g.cin;
        let ci = plane % g.cin;
        convt_bwd_input_plane(gout, k, chunk, bi, ci, g, ho, wo);
    });
}

pub fn convt_bwd_kernel<E: Element>(gout: &[E], x: &[E], gk: &mut [E], g: &ConvTGeom) {
    let (ho, wo) = g.out_hw();
    run_planes(gk, g.kh * g.kw, g.macs(), |plane, chunk| {
        let ci = plane / g.cout;
        let co = plane % g.cout;
        convt_bwd_kernel_plane(gout, x, chunk, ci, co, g, ho, wo);
    });
}

pub fn masked_conv_fwd<E: Element>(
    x: &[E],
    k: &[E],
    taps: &[(usize, usize)],
    out: &mut [E],
    batch: usize,
    cin: usize,
    cout: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
) {
    let work = batch * cout * h * w * cin * taps.len();
    run_planes(out, h * w, work, |plane, chunk| {
        let bi = plane / cout;
        let co = plane % cout;
        masked_conv_plane(x, k, taps, chunk, bi, co, cin, h, w, kh, kw);
    });
}

#[allow(clippy::too_many_arguments)]
pub fn masked_conv_bwd_input<E: Element>(
    gout: &[E],
    k: &[E],
    taps: &[(usize, usize)],
    gx: &mut [E],
    batch: usize,
    cin: usize,
    cout: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
) {
    let work = batch * cout * h * w * cin * taps.len();
    run_planes(gx, h * w, work, |plane, chunk| {
        let bi = plane / cin;
        let ci = plane % cin;
        masked_conv_bwd_input_plane(gout, k, taps, chunk, bi, ci, cin, cout, h, w, kh, kw);
    });
}

#[allow(clippy::too_many_arguments)]
pub fn masked_conv_bwd_kernel<E: Element>(
    gout: &[E],
    x: &[E],
    taps: &[(usize, usize)],
    gk: &mut [E],
    batch: usize,
    cin: usize,
    cout: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
) {
    let work = batch * cout * h * w * cin * taps.len();
    run_planes(gk, kh * kw, work, |plane, chunk| {
        let co = plane / cin;
        let ci = plane % cin;
        masked_conv_bwd_kernel_plane(gout, x, taps, chunk, co, ci, cin, cout, batch, h, w, kh, kw);
    });
}

/// 2x2 average pooling, stride 2, valid (odd trailing row/column dropped).
pub fn avg_pool2_fwd<E: Element>(x: &[E], out: &mut [E], planes: usize, h: usize, w: usize) {
    let ho = h / 2;
    let wo = w / 2;
    let quarter = E::from_f64(0.25);
    run_planes(out, ho * wo, planes * ho * wo * 4, |plane, chunk| {
        let x_plane = &x[plane * h * w..][..h * w];
        for oy in 0..ho {
            let r0 = &x_plane[(2 * oy) * w..][..w];
            let r1 = &x_plane[(2 * oy + 1) * w..][..w];
            let orow = &mut chunk[oy * wo..][..wo];
            for ox in 0..wo {
                orow[ox] = (r0[2 * ox] + r0[2 * ox + 1] + r1[2 * ox] + r1[2 * ox + 1]) * quarter;
            }
        }
    });
}

pub fn avg_pool2_bwd<E: Element>(gout: &[E], gx: &mut [E], planes: usize, h: usize, w: usize) {
    let ho = h / 2;
    let wo = w / 2;
    let quarter = E::from_f64(0.25);
    run_planes(gx, h * w, planes * ho * wo * 4, |plane, chunk| {
        let g_plane = &gout[plane * ho * wo..][..ho * wo];
        for oy in 0..ho {
            let grow = &g_plane[oy * wo..][..wo];
            for ox in 0..wo {
                let gv = grow[ox] * quarter;
                chunk[(2 * oy) * w + 2 * ox] = gv;
                chunk[(2 * oy) * w + 2 * ox + 1] = gv;
                chunk[(2 * oy + 1) * w + 2 * ox] = gv;
                chunk[(2 * oy + 1) * w + 2 * ox + 1] = gv;
            }
        }
    });
}

/// Horizontal 1-D correlation with `taps`, valid padding, per plane.
pub fn filter_rows_fwd<E: Element>(x: &[E], taps: &[E], out: &mut [E], planes: usize, h: usize, w: usize) {
    let t = taps.len();
    let wo = w - t + 1;
    run_planes(out, h * wo, planes * h * wo * t, |plane, chunk| {
        let x_plane = &x[plane * h * w..][..h * w];
        for y in 0..h {
            let xrow = &x_plane[y * w..][..w];
            let orow = &mut chunk[y * wo..][..wo];
            for (ti, &tv) in taps.iter().enumerate() {
                for (o, &xv) in orow.iter_mut().zip(&xrow[ti..ti + wo]) {
                    *o = *o + tv * xv;
                }
            }
        }
    });
}

pub fn filter_rows_bwd<E: Element>(gout: &[E], taps: &[E], gx: &mut [E], planes: usize, h: usize, w: usize) {
    let t = taps.len();
    let wo = w - t + 1;
    run_planes(gx, h * w, planes * h * wo * t, |plane, chunk| {
        let g_plane = &gout[plane * h * wo..][..h * wo];
        for y in 0..h {
            let grow = &g_plane[y * wo..][..wo];
            let xrow = &mut chunk[y * w..][..w];
            for (ti, &tv) in taps.iter().enumerate() {
                for (i, &gv) in grow.iter().enumerate() {
                    xrow[i + ti] = xrow[i + ti] + tv * gv;
                }
            }
        }
    });
}

/// Vertical 1-D correlation with `taps`, valid padding, per plane.
pub fn filter_cols_fwd<E: Element>(x: &[E], taps: &[E], out: &mut [E], planes: usize, h: usize, w: usize) {
    let t = taps.len();
    let ho = h - t + 1;
    run_planes(out, ho * w, planes * ho * w * t, |plane, chunk| {
        let x_plane = &x[plane * h * w..][..h * w];
        for y in 0..ho {
            let orow = &mut chunk[y * w..][..w];
            for (ti, &tv) in taps.iter().enumerate() {
                let xrow = &x_plane[(y + ti) * w..][..w];
                for (o, &xv) in orow.iter_mut().zip(xrow) {
                    *o = *o + tv * xv;
                }
            }
        }
    });
}

pub fn filter_cols_bwd<E: Element>(gout: &[E], taps: &[E], gx: &mut [E], planes: usize, h: usize, w: usize) {
    let t = taps.len();
    let ho = h - t + 1;
    run_planes(gx, h * w, planes * ho * w * t, |plane, chunk| {
        let g_plane = &gout[plane * ho * w..][..ho * w];
        for (ti, &tv) in taps.iter().enumerate() {
            for y in 0..ho {
                let grow = &g_plane[y * w..][..w];
                let xrow = &mut chunk[(y + ti) * w..][..w];
                for (x, &gv) in xrow.iter_mut().zip(grow) {
                    *x = *x + tv * gv;
                }
            }
        }
    });
}

//! Direct convolution and transposed-convolution kernels on row-major slices.
//!
//! Parallelism only splits disjoint output regions (batch items, or output
//! channels for kernel gradients), and each region is filled by a single
//! thread in a fixed order, so results are bit-identical for any thread
//! count.

use rayon::prelude::*;

/// Output side length of a convolution.
pub fn conv_out_side(input: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = input + 2 * padding;
    if padded < kernel {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

/// Output side length of a transposed convolution.
pub fn convt_out_side(input: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    let grown = (input - 1) * stride + kernel;
    if grown < 2 * padding {
        return None;
    }
    Some(grown - 2 * padding)
}

/// dims: (batch, in_ch, in_h=in_w=side) square images throughout.
#[derive(Clone, Copy)]
pub struct ConvDims {
    pub batch: usize,
    pub in_ch: usize,
    pub out_ch: usize,
    pub in_side: usize,
    pub out_side: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

/// out[n,co,oy,ox] = sum_{ci,ky,kx} x[n,ci,oy*s+ky-p, ox*s+kx-p] * w[co,ci,ky,kx]
pub fn conv2d_forward(x: &[f64], w: &[f64], d: &ConvDims) -> Vec<f64> {
    let (h, o, k, s, p) = (d.in_side, d.out_side, d.kernel, d.stride, d.padding);
    let in_plane = h * h;
    let out_plane = o * o;
    let mut out = vec![0.0; d.batch * d.out_ch * out_plane];

    out.par_chunks_mut(d.out_ch * out_plane)
        .enumerate()
        .for_each(|(n, out_n)| {
            let x_n = &x[n * d.in_ch * in_plane..(n + 1) * d.in_ch * in_plane];
            for co in 0..d.out_ch {
                let out_c = &mut out_n[co * out_plane..(co + 1) * out_plane];
                for ci in 0..d.in_ch {
                    let x_c = &x_n[ci * in_plane..(ci + 1) * in_plane];
                    let w_base = (co * d.in_ch + ci) * k * k;
                    for ky in 0..k {
                        for kx in 0..k {
                            let wv = w[w_base + ky * k + kx];
                            if wv == 0.0 {
                                continue;
                            }
                            for oy in 0..o {
                                let iy = (oy * s + ky) as isize - p as isize;
                                if iy < 0 || iy >= h as isize {
                                    continue;
                                }
                                let x_row = &x_c[iy as usize * h..(iy as usize + 1) * h];
                                let out_row = &mut out_c[oy * o..(oy + 1) * o];
                                let off = kx as isize - p as isize;
                                for (ox, val) in out_row.iter_mut().enumerate() {
                                    let ix = (ox * s) as isize + off;
                                    if ix >= 0 && ix < h as isize {
                                        *val += wv * x_row[ix as usize];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        });
    out
}

/// dX[n,ci,iy,ix] = sum_{co,ky,kx valid} gout[n,co,oy,ox] * w[co,ci,ky,kx]
pub fn conv2d_input_grad(gout: &[f64], w: &[f64], d: &ConvDims) -> Vec<f64> {
    let (h, o, k, s, p) = (d.in_side, d.out_side, d.kernel, d.stride, d.padding);
    let in_plane = h * h;
    let out_plane = o * o;
    let mut dx = vec![0.0; d.batch * d.in_ch * in_plane];

    dx.par_chunks_mut(d.in_ch * in_plane)
        .enumerate()
        .for_each(|(n, dx_n)| {
            let g_n = &gout[n * d.out_ch * out_plane..(n + 1) * d.out_ch * out_plane];
            for ci in 0..d.in_ch {
                let dx_c = &mut dx_n[ci * in_plane..(ci + 1) * in_plane];
                for co in 0..d.out_ch {
                    let g_c = &g_n[co * out_plane..(co + 1) * out_plane];
                    let w_base = (co * d.in_ch + ci) * k * k;
                    for ky in 0..k {
                        for kx in 0..k {
                            let wv = w[w_base + ky * k + kx];
                            if wv == 0.0 {
                                continue;
                            }
                            for oy in 0..o {
                                let iy = (oy * s + ky) as isize - p as isize;
                                if iy < 0 || iy >= h as isize {
                                    continue;
                                }
                                let dx_row = &mut dx_c[iy as usize * h..(iy as usize + 1) * h];
                                let g_row = &g_c[oy * o..(oy + 1) * o];
                                let off = kx as isize - p as isize;
                                for (ox, &gv) in g_row.iter().enumerate() {
                                    let ix = (ox * s) as isize + off;
                                    if ix >= 0 && ix < h as isize {
                                        dx_row[ix as usize] += wv * gv;
                                    }
                                }
                            }
                        }
                    }
                }
            }
        });
    dx
}

/// dW[co,ci,ky,kx] = sum_{n,oy,ox valid} gout[n,co,oy,ox] * x[n,ci,oy*s+ky-p, ox*s+kx-p]
pub fn conv2d_kernel_grad(gout: &[f64], x: &[f64], d: &ConvDims) -> Vec<f64> {
    let (h, o, k, s, p) = (d.in_side, d.out_side, d.kernel, d.stride, d.padding);
    let in_plane = h * h;
    let out_plane = o * o;
    let mut dw = vec![0.0; d.out_ch * d.in_ch * k * k];

    dw.par_chunks_mut(d.in_ch * k * k)
        .enumerate()
        .for_each(|(co, dw_co)| {
            for n in 0..d.batch {
                let g_c = &gout[(n * d.out_ch + co) * out_plane..][..out_plane];
                for ci in 0..d.in_ch {
                    let x_c = &x[(n * d.in_ch + ci) * in_plane..][..in_plane];
                    for ky in 0..k {
                        for kx in 0..k {
                            let mut acc = 0.0;
                            for oy in 0..o {
                                let iy = (oy * s + ky) as isize - p as isize;
                                if iy < 0 || iy >= h as isize {
                                    continue;
                                }
                                let x_row = &x_c[iy as usize * h..(iy as usize + 1) * h];
                                let g_row = &g_c[oy * o..(oy + 1) * o];
                                let off = kx as isize - p as isize;
                                for (ox, &gv) in g_row.iter().enumerate() {
                                    let ix = (ox * s) as isize + off;
                                    if ix >= 0 && ix < h as isize {
                                        acc += gv * x_row[ix as usize];
                                    }
                                }
                            }
                            dw_co[ci * k * k + ky * k + kx] += acc;
                        }
                    }
                }
            }
        });
    dw
}

/// Transposed convolution; weight layout (in_ch, out_ch, k, k).
/// out[n,co, iy*s+ky-p, ix*s+kx-p] += x[n,ci,iy,ix] * w[ci,co,ky,kx]
pub fn convt_forward(x: &[f64], w: &[f64], d: &ConvDims) -> Vec<f64> {
    let (h, o, k, s, p) = (d.in_side, d.out_side, d.kernel, d.stride, d.padding);
    let in_plane = h * h;
    let out_plane = o * o;
    let mut out = vec![0.0; d.batch * d.out_ch * out_plane];

    out.par_chunks_mut(d.out_ch * out_plane)
        .enumerate()
        .for_each(|(n, out_n)| {
            let x_n = &x[n * d.in_ch * in_plane..(n + 1) * d.in_ch * in_plane];
            for co in 0..d.out_ch {
                let out_c = &mut out_n[co * out_plane..(co + 1) * out_plane];
                for ci in 0..d.in_ch {
                    let x_c = &x_n[ci * in_plane..(ci + 1) * in_plane];
                    let w_base = (ci * d.out_ch + co) * k * k;
                    for ky in 0..k {
                        for kx in 0..k {
                            let wv = w[w_base + ky * k + kx];
                            if wv == 0.0 {
                                continue;
                            }
                            for iy in 0..h {
                                let oy = (iy * s + ky) as isize - p as isize;
                                if oy < 0 || oy >= o as isize {
                                    continue;
                                }
                                let x_row = &x_c[iy * h..(iy + 1) * h];
                                let out_row = &mut out_c[oy as usize * o..(oy as usize + 1) * o];
                                let off = kx as isize - p as isize;
                                for (ix, &xv) in x_row.iter().enumerate() {
                                    let ox = (ix * s) as isize + off;
                                    if ox >= 0 && ox < o as isize {
                                        out_row[ox as usize] += wv * xv;
                                    }
                                }
                            }
                        }
                    }
                }
            }
        });
    out
}

/// dX[n,ci,iy,ix] = sum_{co,ky,kx valid} gout[n,co,iy*s+ky-p, ix*s+kx-p] * w[ci,co,ky,kx]
pub fn convt_input_grad(gout: &[f64], w: &[f64], d: &ConvDims) -> Vec<f64> {
    let (h, o, k, s, p) = (d.in_side, d.out_side, d.kernel, d.stride, d.padding);
    let in_plane = h * h;
    let out_plane = o * o;
    let mut dx = vec![0.0; d.batch * d.in_ch * in_plane];

    dx.par_chunks_mut(d.in_ch * in_plane)
        .enumerate()
        .for_each(|(n, dx_n)| {
            let g_n = &gout[n * d.out_ch * out_plane..(n + 1) * d.out_ch * out_plane];
            for ci in 0..d.in_ch {
                let dx_c = &mut dx_n[ci * in_plane..(ci + 1) * in_plane];
                for co in 0..d.out_ch {
                    let g_c = &g_n[co * out_plane..(co + 1) * out_plane];
                    let w_base = (ci * d.out_ch + co) * k * k;
                    for ky in 0..k {
                        for kx in 0..k {
                            let wv = w[w_base + ky * k + kx];
                            if wv == 0.0 {
                                continue;
                            }
                            for iy in 0..h {
                                let oy = (iy * s + ky) as isize - p as isize;
                                if oy < 0 || oy >= o as isize {
                                    continue;
                                }
                                let dx_row = &mut dx_c[iy * h..(iy + 1) * h];
                                let g_row = &g_c[oy as usize * o..(oy as usize + 1) * o];
                                let off = kx as isize - p as isize;
                                for (ix, dv) in dx_row.iter_mut().enumerate() {
                                    let ox = (ix * s) as isize + off;
                                    if ox >= 0 && ox < o as isize {
                                        *dv += wv * g_row[ox as usize];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        });
    dx
}

/// dW[ci,co,ky,kx] = sum_{n,iy,ix valid} x[n,ci,iy,ix] * gout[n,co,iy*s+ky-p, ix*s+kx-p]
pub fn convt_kernel_grad(gout: &[f64], x: &[f64], d: &ConvDims) -> Vec<f64> {
    let (h, o, k, s, p) = (d.in_side, d.out_side, d.kernel, d.stride, d.padding);
    let in_plane = h * h;
    let out_plane = o * o;
    let mut dw = vec![0.0; d.in_ch * d.out_ch * k * k];

    dw.par_chunks_mut(d.out_ch * k * k)
        .enumerate()
        .for_each(|(ci, dw_ci)| {
            for n in 0..d.batch {
                let x_c = &x[(n * d.in_ch + ci) * in_plane..][..in_plane];
                for co in 0..d.out_ch {
                    let g_c = &gout[(n * d.out_ch + co) * out_plane..][..out_plane];
                    for ky in 0..k {
                        for kx in 0..k {
                            let mut acc = 0.0;
                            for iy in 0..h {
                                let oy = (iy * s + ky) as isize - p as isize;
                                if oy < 0 || oy >= o as isize {
                                    continue;
                                }
                                let x_row = &x_c[iy * h..(iy + 1) * h];
                                let g_row = &g_c[oy as usize * o..(oy as usize + 1) * o];
                                let off = kx as isize - p as isize;
                                for (ix, &xv) in x_row.iter().enumerate() {
                                    let ox = (ix * s) as isize + off;
                                    if ox >= 0 && ox < o as isize {
                                        acc += xv * g_row[ox as usize];
                                    }
                                }
                            }
                            dw_ci[co * k * k + ky * k + kx] += acc;
                        }
                    }
                }
            }
        });
    dw
}

//! Raw convolution and resampling kernels over flat f64 buffers.
//!
//! Every output element is an independent dot product with a fixed
//! summation order, so rayon parallelism cannot change results. Border
//! handling is hoisted out of the inner loops: for each kernel tap the
//! valid output range is precomputed, and stride-1 paths run over
//! contiguous slices.

use rayon::prelude::*;

pub(crate) fn conv_out_extent(input: usize, k: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = input + 2 * pad;
    if padded < k {
        return None;
    }
    Some((padded - k) / stride + 1)
}

/// Output positions o for which `o*stride + k_off - pad` lands inside
/// `0..n_in`, clipped to `0..n_out`.
#[inline]
fn valid_out_range(
    k_off: usize,
    pad: usize,
    stride: usize,
    n_in: usize,
    n_out: usize,
) -> (usize, usize) {
    let lo = if pad > k_off {
        (pad - k_off).div_ceil(stride)
    } else {
        0
    };
    let hi_num = n_in as isize - 1 + pad as isize - k_off as isize;
    let hi = if hi_num < 0 {
        0
    } else {
        (hi_num as usize / stride + 1).min(n_out)
    };
    (lo.min(hi), hi)
}

/// Cross-correlation of `input [B,Ci,H,W]` with `weight [Co,Ci,k,k]`.
pub(crate) fn conv2d_forward(
    input: &[f64],
    weight: &[f64],
    b: usize,
    ci: usize,
    h: usize,
    w: usize,
    co: usize,
    k: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
) -> Vec<f64> {
    let mut out = vec![0.0; b * co * ho * wo];
    out.par_chunks_mut(ho * wo).enumerate().for_each(|(bo, plane)| {
        let batch = bo / co;
        let oc = bo % co;
        let in_base = batch * ci * h * w;
        let w_base = oc * ci * k * k;
        for ic in 0..ci {
            let in_plane = &input[in_base + ic * h * w..in_base + (ic + 1) * h * w];
            for ky in 0..k {
                let (oy_lo, oy_hi) = valid_out_range(ky, pad, stride, h, ho);
                for kx in 0..k {
                    let wv = weight[w_base + ic * k * k + ky * k + kx];
                    if wv == 0.0 {
                        continue;
                    }
                    let (ox_lo, ox_hi) = valid_out_range(kx, pad, stride, w, wo);
                    if ox_lo >= ox_hi {
                        continue;
                    }
                    for oy in oy_lo..oy_hi {
                        let iy = oy * stride + ky - pad;
                        let in_row = &in_plane[iy * w..iy * w + w];
                        let out_row = &mut plane[oy * wo..oy * wo + wo];
                        if stride == 1 {
                            let ix0 = ox_lo + kx - pad;
                            for (o, &v) in out_row[ox_lo..ox_hi]
                                .iter_mut()
                                .zip(&in_row[ix0..ix0 + (ox_hi - ox_lo)])
                            {
                                *o += wv * v;
                            }
                        } else {
                            for ox in ox_lo..ox_hi {
                                *unsafe { out_row.get_unchecked_mut(ox) } +=
                                    wv * unsafe { *in_row.get_unchecked(ox * stride + kx - pad) };
                            }
                        }
                    }
                }
            }
        }
    });
    out
}

/// Gradient w.r.t. the convolution input.
pub(crate) fn conv2d_input_grad(
    grad_out: &[f64],
    weight: &[f64],
    b: usize,
    ci: usize,
    h: usize,
    w: usize,
    co: usize,
    k: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
) -> Vec<f64> {
    let mut gin = vec![0.0; b * ci * h * w];
    gin.par_chunks_mut(h * w).enumerate().for_each(|(bi, plane)| {
        let batch = bi / ci;
        let ic = bi % ci;
        for oc in 0..co {
            let go_plane = &grad_out[(batch * co + oc) * ho * wo..(batch * co + oc + 1) * ho * wo];
            let w_base = (oc * ci + ic) * k * k;
            for ky in 0..k {
                let (oy_lo, oy_hi) = valid_out_range(ky, pad, stride, h, ho);
                for kx in 0..k {
                    let wv = weight[w_base + ky * k + kx];
                    if wv == 0.0 {
                        continue;
                    }
                    let (ox_lo, ox_hi) = valid_out_range(kx, pad, stride, w, wo);
                    if ox_lo >= ox_hi {
                        continue;
                    }
                    for oy in oy_lo..oy_hi {
                        let iy = oy * stride + ky - pad;
                        let go_row = &go_plane[oy * wo..oy * wo + wo];
                        let in_row = &mut plane[iy * w..iy * w + w];
                        if stride == 1 {
                            let ix0 = ox_lo + kx - pad;
                            for (i, &g) in in_row[ix0..ix0 + (ox_hi - ox_lo)]
                                .iter_mut()
                                .zip(&go_row[ox_lo..ox_hi])
                            {
                                *i += wv * g;
                            }
                        } else {
                            for ox in ox_lo..ox_hi {
                                *unsafe { in_row.get_unchecked_mut(ox * stride + kx - pad) } +=
                                    wv * unsafe { *go_row.get_unchecked(ox) };
                            }
                        }
                    }
                }
            }
        }
    });
    gin
}

/// Gradient w.r.t. the convolution weight.
pub(crate) fn conv2d_weight_grad(
    grad_out: &[f64],
    input: &[f64],
    b: usize,
    ci: usize,
    h: usize,
    w: usize,
    co: usize,
    k: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
) -> Vec<f64> {
    let mut gw = vec![0.0; co * ci * k * k];
    gw.par_chunks_mut(ci * k * k).enumerate().for_each(|(oc, wslab)| {
        for batch in 0..b {
            let go_plane = &grad_out[(batch * co + oc) * ho * wo..(batch * co + oc + 1) * ho * wo];
            for ic in 0..ci {
                let in_plane = &input[(batch * ci + ic) * h * w..(batch * ci + ic + 1) * h * w];
                for ky in 0..k {
                    let (oy_lo, oy_hi) = valid_out_range(ky, pad, stride, h, ho);
                    for kx in 0..k {
                        let (ox_lo, ox_hi) = valid_out_range(kx, pad, stride, w, wo);
                        if ox_lo >= ox_hi {
                            continue;
                        }
                        let mut acc = 0.0;
                        for oy in oy_lo..oy_hi {
                            let iy = oy * stride + ky - pad;
                            let go_row = &go_plane[oy * wo..oy * wo + wo];
                            let in_row = &in_plane[iy * w..iy * w + w];
                            if stride == 1 {
                                let ix0 = ox_lo + kx - pad;
                                for (&g, &v) in go_row[ox_lo..ox_hi]
                                    .iter()
                                    .zip(&in_row[ix0..ix0 + (ox_hi - ox_lo)])
                                {
                                    acc += g * v;
                                }
                            } else {
                                for ox in ox_lo..ox_hi {
                                    acc += unsafe { *go_row.get_unchecked(ox) }
                                        * unsafe { *in_row.get_unchecked(ox * stride + kx - pad) };
                                }
                            }
                        }
                        wslab[ic * k * k + ky * k + kx] += acc;
                    }
                }
            }
        }
    });
    gw
}

/// Source taps for 2x bilinear upsampling without corner alignment:
/// output index `o` samples input coordinate `(o + 0.5)/2 - 0.5`,
/// clamped at the borders.
#[inline]
pub(crate) fn up2_taps(o: usize, n_in: usize) -> (usize, usize, f64) {
    let src = (o as f64 + 0.5) / 2.0 - 0.5;
    let lo = src.floor();
    let t = src - lo;
    let i0 = (lo.max(0.0) as usize).min(n_in - 1);
    let i1 = (i0 + 1).min(n_in - 1);
    let i0 = if lo < 0.0 { 0 } else { i0 };
    (i0, i1, t)
}

/// Bilinear 2x upsample of `[planes, H, W]` stacked channel planes.
pub(crate) fn upsample2x_forward(input: &[f64], planes: usize, h: usize, w: usize) -> Vec<f64> {
    let (ho, wo) = (h * 2, w * 2);
    let mut out = vec![0.0; planes * ho * wo];
    out.par_chunks_mut(ho * wo).enumerate().for_each(|(p, plane)| {
        let src = &input[p * h * w..(p + 1) * h * w];
        for oy in 0..ho {
            let (y0, y1, ty) = up2_taps(oy, h);
            for ox in 0..wo {
                let (x0, x1, tx) = up2_taps(ox, w);
                let v00 = src[y0 * w + x0];
                let v01 = src[y0 * w + x1];
                let v10 = src[y1 * w + x0];
                let v11 = src[y1 * w + x1];
                plane[oy * wo + ox] = (1.0 - ty) * ((1.0 - tx) * v00 + tx * v01)
                    + ty * ((1.0 - tx) * v10 + tx * v11);
            }
        }
    });
    out
}

/// Transpose of `upsample2x_forward`.
pub(crate) fn upsample2x_backward(grad_out: &[f64], planes: usize, h: usize, w: usize) -> Vec<f64> {
    let (ho, wo) = (h * 2, w * 2);
    let mut gin = vec![0.0; planes * h * w];
    gin.par_chunks_mut(h * w).enumerate().for_each(|(p, plane)| {
        let go = &grad_out[p * ho * wo..(p + 1) * ho * wo];
        for oy in 0..ho {
            let (y0, y1, ty) = up2_taps(oy, h);
            for ox in 0..wo {
                let (x0, x1, tx) = up2_taps(ox, w);
                let g = go[oy * wo + ox];
                plane[y0 * w + x0] += (1.0 - ty) * (1.0 - tx) * g;
                plane[y0 * w + x1] += (1.0 - ty) * tx * g;
                plane[y1 * w + x0] += ty * (1.0 - tx) * g;
                plane[y1 * w + x1] += ty * tx * g;
            }
        }
    });
    gin
}

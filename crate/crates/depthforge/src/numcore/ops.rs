use rayon::prelude::*;

use super::conv;
use super::tensor::{Node, NumError, Result, Tensor};

/// How a non-leaf tensor was produced. Backward dispatch recomputes
/// whatever cheap intermediates it needs from the parents.
pub(crate) enum Op {
    Add,
    Mul,
    Matmul,
    Scale(f64),
    AddScalar,
    Sum,
    Mean,
    Concat { axis: usize },
    Reshape,
    LeakyRelu(f64),
    PixelNorm { eps: f64 },
    Softmax,
    LogSoftmax,
    Embedding { index: usize },
    Upsample2x,
    Conv2d { stride: usize, pad: usize },
    ModConv2d { pad: usize, demodulate: bool, eps: f64 },
    AddChannelBias,
    MinibatchStddev { eps: f64 },
    AverageK,
}

impl Op {
    pub(crate) fn name(&self) -> &'static str {
        match self {
            Op::Add => "add",
            Op::Mul => "mul",
            Op::Matmul => "matmul",
            Op::Scale(_) => "scale",
            Op::AddScalar => "add_scalar",
            Op::Sum => "sum",
            Op::Mean => "mean",
            Op::Concat { .. } => "concat",
            Op::Reshape => "reshape",
            Op::LeakyRelu(_) => "leaky_relu",
            Op::PixelNorm { .. } => "pixel_norm",
            Op::Softmax => "softmax",
            Op::LogSoftmax => "log_softmax",
            Op::Embedding { .. } => "embedding_lookup",
            Op::Upsample2x => "upsample2x",
            Op::Conv2d { .. } => "conv2d",
            Op::ModConv2d { .. } => "modulated_conv2d",
            Op::AddChannelBias => "add_channel_bias",
            Op::MinibatchStddev { .. } => "minibatch_stddev",
            Op::AverageK => "average",
        }
    }
}

/// Maps a tensor shape onto an (outer, channels, inner) view with the
/// channel axis in the conventional position: `[C]`, `[B,C]`, `[C,H,W]`
/// or `[B,C,H,W]`.
fn channel_view(shape: &[usize]) -> Option<(usize, usize, usize)> {
    match shape.len() {
        1 => Some((1, shape[0], 1)),
        2 => Some((shape[0], shape[1], 1)),
        3 => Some((1, shape[0], shape[1] * shape[2])),
        4 => Some((shape[0], shape[1], shape[2] * shape[3])),
        _ => None,
    }
}

fn image_dims(op: &'static str, shape: &[usize]) -> Result<(usize, usize, usize, usize)> {
    match shape.len() {
        3 => Ok((1, shape[0], shape[1], shape[2])),
        4 => Ok((shape[0], shape[1], shape[2], shape[3])),
        _ => Err(NumError::BadShape {
            op,
            expected: "a [C,H,W] or [B,C,H,W] tensor".into(),
            got: shape.to_vec(),
        }),
    }
}

// ---------------------------------------------------------------------------
// elementwise & reductions
// ---------------------------------------------------------------------------

/// Elementwise sum. `b` may have a shape that is a trailing suffix of
/// `a`'s (it is then broadcast over the leading dimensions).
pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape() == b.shape() {
        let data = a.data().iter().zip(b.data()).map(|(x, y)| x + y).collect();
        return Tensor::from_op(a.shape().to_vec(), data, vec![a.clone(), b.clone()], Op::Add);
    }
    if a.shape().len() > b.shape().len() && a.shape().ends_with(b.shape()) {
        let block = b.numel();
        let data = a
            .data()
            .iter()
            .enumerate()
            .map(|(i, x)| x + b.data()[i % block])
            .collect();
        return Tensor::from_op(a.shape().to_vec(), data, vec![a.clone(), b.clone()], Op::Add);
    }
    Err(NumError::ShapeMismatch {
        op: "add",
        lhs: a.shape().to_vec(),
        rhs: b.shape().to_vec(),
    })
}

/// Elementwise product of equal-shape tensors.
pub fn mul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape() != b.shape() {
        return Err(NumError::ShapeMismatch {
            op: "mul",
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    let data = a.data().iter().zip(b.data()).map(|(x, y)| x * y).collect();
    Tensor::from_op(a.shape().to_vec(), data, vec![a.clone(), b.clone()], Op::Mul)
}

pub fn scale(a: &Tensor, factor: f64) -> Result<Tensor> {
    let data = a.data().iter().map(|x| x * factor).collect();
    Tensor::from_op(a.shape().to_vec(), data, vec![a.clone()], Op::Scale(factor))
}

pub fn add_scalar(a: &Tensor, value: f64) -> Result<Tensor> {
    let data = a.data().iter().map(|x| x + value).collect();
    Tensor::from_op(a.shape().to_vec(), data, vec![a.clone()], Op::AddScalar)
}

pub fn sum(a: &Tensor) -> Result<Tensor> {
    let s: f64 = a.data().iter().sum();
    Tensor::from_op(vec![1], vec![s], vec![a.clone()], Op::Sum)
}

pub fn mean(a: &Tensor) -> Result<Tensor> {
    if a.numel() == 0 {
        return Err(NumError::EmptyInput { op: "mean" });
    }
    let s: f64 = a.data().iter().sum();
    Tensor::from_op(vec![1], vec![s / a.numel() as f64], vec![a.clone()], Op::Mean)
}

/// `[m,k] x [k,n] -> [m,n]`; a rank-1 left operand `[k]` yields `[n]`.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (m, k) = match a.shape() {
        [k] => (1, *k),
        [m, k] => (*m, *k),
        _ => {
            return Err(NumError::BadShape {
                op: "matmul",
                expected: "rank-1 or rank-2 left operand".into(),
                got: a.shape().to_vec(),
            })
        }
    };
    let [k2, n] = b.shape() else {
        return Err(NumError::BadShape {
            op: "matmul",
            expected: "rank-2 right operand".into(),
            got: b.shape().to_vec(),
        });
    };
    if k != *k2 {
        return Err(NumError::ShapeMismatch {
            op: "matmul",
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    let (k2, n) = (*k2, *n);
    let data = gemm(a.data(), b.data(), m, k2, n);
    let out_shape = if a.shape().len() == 1 { vec![n] } else { vec![m, n] };
    Tensor::from_op(out_shape, data, vec![a.clone(), b.clone()], Op::Matmul)
}

/// Row-major `[m,k] x [k,n]`; each output row is independent.
fn gemm(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    out.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (r, bv) in row.iter_mut().zip(brow) {
                *r += av * bv;
            }
        }
    });
    out
}

/// `[m,k]^T x [m,n] -> [k,n]`.
fn gemm_at_b(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; k * n];
    out.par_chunks_mut(n).enumerate().for_each(|(p, row)| {
        for i in 0..m {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[i * n..(i + 1) * n];
            for (r, bv) in row.iter_mut().zip(brow) {
                *r += av * bv;
            }
        }
    });
    out
}

/// `[m,n] x [k,n]^T -> [m,k]`.
fn gemm_a_bt(a: &[f64], b: &[f64], m: usize, n: usize, k: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * k];
    out.par_chunks_mut(k).enumerate().for_each(|(i, row)| {
        let arow = &a[i * n..(i + 1) * n];
        for (p, r) in row.iter_mut().enumerate() {
            let brow = &b[p * n..(p + 1) * n];
            let mut acc = 0.0;
            for (av, bv) in arow.iter().zip(brow) {
                acc += av * bv;
            }
            *r = acc;
        }
    });
    out
}

/// Concatenation of two equal-rank tensors along `axis`.
pub fn concat(a: &Tensor, b: &Tensor, axis: usize) -> Result<Tensor> {
    let ra = a.shape();
    let rb = b.shape();
    let rank_ok = ra.len() == rb.len() && axis < ra.len();
    let dims_ok = rank_ok
        && ra
            .iter()
            .zip(rb)
            .enumerate()
            .all(|(i, (x, y))| i == axis || x == y);
    if !dims_ok {
        return Err(NumError::ShapeMismatch {
            op: "concat",
            lhs: ra.to_vec(),
            rhs: rb.to_vec(),
        });
    }
    let outer: usize = ra[..axis].iter().product();
    let inner: usize = ra[axis + 1..].iter().product();
    let (la, lb) = (ra[axis], rb[axis]);
    let mut shape = ra.to_vec();
    shape[axis] = la + lb;
    let mut data = Vec::with_capacity(a.numel() + b.numel());
    for o in 0..outer {
        data.extend_from_slice(&a.data()[o * la * inner..(o + 1) * la * inner]);
        data.extend_from_slice(&b.data()[o * lb * inner..(o + 1) * lb * inner]);
    }
    Tensor::from_op(shape, data, vec![a.clone(), b.clone()], Op::Concat { axis })
}

pub fn reshape(a: &Tensor, shape: &[usize]) -> Result<Tensor> {
    let n: usize = shape.iter().product();
    if n != a.numel() {
        return Err(NumError::BadShape {
            op: "reshape",
            expected: format!("{} elements", a.numel()),
            got: shape.to_vec(),
        });
    }
    Tensor::from_op(shape.to_vec(), a.data().to_vec(), vec![a.clone()], Op::Reshape)
}

// ---------------------------------------------------------------------------
// activations & normalizations
// ---------------------------------------------------------------------------

pub fn leaky_relu(a: &Tensor, slope: f64) -> Result<Tensor> {
    let data = a
        .data()
        .iter()
        .map(|&x| if x >= 0.0 { x } else { slope * x })
        .collect();
    Tensor::from_op(a.shape().to_vec(), data, vec![a.clone()], Op::LeakyRelu(slope))
}

/// `x / sqrt(mean_c(x^2) + eps)` along the channel axis.
pub fn pixel_norm(a: &Tensor) -> Result<Tensor> {
    const EPS: f64 = 1e-8;
    let (outer, c, inner) = channel_view(a.shape()).ok_or_else(|| NumError::BadShape {
        op: "pixel_norm",
        expected: "rank 1..4 tensor".into(),
        got: a.shape().to_vec(),
    })?;
    if c == 0 {
        return Err(NumError::EmptyInput { op: "pixel_norm" });
    }
    let x = a.data();
    let mut data = vec![0.0; x.len()];
    for o in 0..outer {
        for i in 0..inner {
            let mut ssq = 0.0;
            for ch in 0..c {
                let v = x[(o * c + ch) * inner + i];
                ssq += v * v;
            }
            let r = 1.0 / (ssq / c as f64 + EPS).sqrt();
            for ch in 0..c {
                let idx = (o * c + ch) * inner + i;
                data[idx] = x[idx] * r;
            }
        }
    }
    Tensor::from_op(a.shape().to_vec(), data, vec![a.clone()], Op::PixelNorm { eps: EPS })
}

fn softmax_like(a: &Tensor, log: bool) -> Result<Tensor> {
    let op = if log { "log_softmax" } else { "softmax" };
    let (outer, c, inner) = channel_view(a.shape()).ok_or_else(|| NumError::BadShape {
        op: "softmax",
        expected: "rank 1..4 tensor".into(),
        got: a.shape().to_vec(),
    })?;
    if c == 0 {
        return Err(NumError::EmptyInput {
            op: if log { "log_softmax" } else { "softmax" },
        });
    }
    let _ = op;
    let x = a.data();
    let mut data = vec![0.0; x.len()];
    for o in 0..outer {
        for i in 0..inner {
            let mut mx = f64::NEG_INFINITY;
            for ch in 0..c {
                mx = mx.max(x[(o * c + ch) * inner + i]);
            }
            let mut z = 0.0;
            for ch in 0..c {
                z += (x[(o * c + ch) * inner + i] - mx).exp();
            }
            if log {
                let lz = z.ln();
                for ch in 0..c {
                    let idx = (o * c + ch) * inner + i;
                    data[idx] = x[idx] - mx - lz;
                }
            } else {
                for ch in 0..c {
                    let idx = (o * c + ch) * inner + i;
                    data[idx] = (x[idx] - mx).exp() / z;
                }
            }
        }
    }
    let kind = if log { Op::LogSoftmax } else { Op::Softmax };
    Tensor::from_op(a.shape().to_vec(), data, vec![a.clone()], kind)
}

/// Softmax over the channel axis (the depth-bin axis for logit maps).
pub fn softmax_channels(a: &Tensor) -> Result<Tensor> {
    softmax_like(a, false)
}

pub fn log_softmax_channels(a: &Tensor) -> Result<Tensor> {
    softmax_like(a, true)
}

/// Row `index` of a `[rows, width]` table.
pub fn embedding_lookup(table: &Tensor, index: usize) -> Result<Tensor> {
    let [rows, width] = table.shape() else {
        return Err(NumError::BadShape {
            op: "embedding_lookup",
            expected: "rank-2 table".into(),
            got: table.shape().to_vec(),
        });
    };
    if index >= *rows {
        return Err(NumError::IndexOutOfRange {
            op: "embedding_lookup",
            index,
            len: *rows,
        });
    }
    let (rows, width) = (*rows, *width);
    let _ = rows;
    let data = table.data()[index * width..(index + 1) * width].to_vec();
    Tensor::from_op(vec![width], data, vec![table.clone()], Op::Embedding { index })
}

/// Bilinear 2x upsample of a `[C,H,W]` or `[B,C,H,W]` tensor.
pub fn upsample2x_bilinear(a: &Tensor) -> Result<Tensor> {
    let (b, c, h, w) = image_dims("upsample2x", a.shape())?;
    let data = conv::upsample2x_forward(a.data(), b * c, h, w);
    let shape = if a.shape().len() == 3 {
        vec![c, h * 2, w * 2]
    } else {
        vec![b, c, h * 2, w * 2]
    };
    Tensor::from_op(shape, data, vec![a.clone()], Op::Upsample2x)
}

// ---------------------------------------------------------------------------
// convolutions
// ---------------------------------------------------------------------------

fn conv_shape_check(
    op: &'static str,
    input: &Tensor,
    weight: &Tensor,
    stride: usize,
    pad: usize,
) -> Result<(usize, usize, usize, usize, usize, usize, usize, usize)> {
    let [b, ci, h, w] = input.shape() else {
        return Err(NumError::BadShape {
            op,
            expected: "[B,Cin,H,W] input".into(),
            got: input.shape().to_vec(),
        });
    };
    let [co, ci2, k, k2] = weight.shape() else {
        return Err(NumError::BadShape {
            op,
            expected: "[Cout,Cin,k,k] weight".into(),
            got: weight.shape().to_vec(),
        });
    };
    if ci != ci2 || k != k2 {
        return Err(NumError::ShapeMismatch {
            op,
            lhs: input.shape().to_vec(),
            rhs: weight.shape().to_vec(),
        });
    }
    if !matches!(*k, 1 | 3) || !matches!(stride, 1 | 2) {
        return Err(NumError::BadShape {
            op,
            expected: "kernel in {1,3} and stride in {1,2}".into(),
            got: vec![*k, stride],
        });
    }
    let ho = conv::conv_out_extent(*h, *k, stride, pad);
    let wo = conv::conv_out_extent(*w, *k, stride, pad);
    match (ho, wo) {
        (Some(ho), Some(wo)) if ho >= 1 && wo >= 1 => Ok((*b, *ci, *h, *w, *co, *k, ho, wo)),
        _ => Err(NumError::BadShape {
            op,
            expected: "output extent >= 1".into(),
            got: vec![*h, *w],
        }),
    }
}

/// Standard cross-correlation of `[B,Cin,H,W]` with `[Cout,Cin,k,k]`.
pub fn conv2d(input: &Tensor, weight: &Tensor, stride: usize, pad: usize) -> Result<Tensor> {
    let (b, ci, h, w, co, k, ho, wo) = conv_shape_check("conv2d", input, weight, stride, pad)?;
    let data =
        conv::conv2d_forward(input.data(), weight.data(), b, ci, h, w, co, k, stride, pad, ho, wo);
    Tensor::from_op(
        vec![b, co, ho, wo],
        data,
        vec![input.clone(), weight.clone()],
        Op::Conv2d { stride, pad },
    )
}

const DEMOD_EPS: f64 = 1e-8;

fn modulate_weight(
    weight: &[f64],
    style: &[f64],
    co: usize,
    ci: usize,
    k: usize,
    demodulate: bool,
    eps: f64,
) -> (Vec<f64>, Vec<f64>) {
    let kk = k * k;
    let mut m = vec![0.0; weight.len()];
    for o in 0..co {
        for i in 0..ci {
            let s = style[i];
            let base = (o * ci + i) * kk;
            for t in 0..kk {
                m[base + t] = weight[base + t] * s;
            }
        }
    }
    let mut demod = vec![1.0; co];
    if demodulate {
        for o in 0..co {
            let mut ssq = 0.0;
            for t in 0..ci * kk {
                let v = m[o * ci * kk + t];
                ssq += v * v;
            }
            demod[o] = 1.0 / (ssq + eps).sqrt();
        }
        for o in 0..co {
            let d = demod[o];
            for t in 0..ci * kk {
                m[o * ci * kk + t] *= d;
            }
        }
    }
    (m, demod)
}

/// Convolution with per-input-channel weight modulation: the style
/// vector scales the weights channelwise and, when `demodulate` is set,
/// each output filter is renormalized to unit L2 norm (epsilon-guarded).
/// Stride is always 1.
pub fn modulated_conv2d(
    input: &Tensor,
    weight: &Tensor,
    style: &Tensor,
    demodulate: bool,
    pad: usize,
) -> Result<Tensor> {
    let (b, ci, h, w, co, k, ho, wo) =
        conv_shape_check("modulated_conv2d", input, weight, 1, pad)?;
    if style.shape() != [ci] {
        return Err(NumError::ShapeMismatch {
            op: "modulated_conv2d",
            lhs: style.shape().to_vec(),
            rhs: vec![ci],
        });
    }
    let (mw, _) = modulate_weight(weight.data(), style.data(), co, ci, k, demodulate, DEMOD_EPS);
    let data = conv::conv2d_forward(input.data(), &mw, b, ci, h, w, co, k, 1, pad, ho, wo);
    Tensor::from_op(
        vec![b, co, ho, wo],
        data,
        vec![input.clone(), weight.clone(), style.clone()],
        Op::ModConv2d {
            pad,
            demodulate,
            eps: DEMOD_EPS,
        },
    )
}

/// Adds a `[C]` bias across the channel planes of a `[C,H,W]` or
/// `[B,C,H,W]` tensor.
pub fn add_channel_bias(input: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (b, c, h, w) = image_dims("add_channel_bias", input.shape())?;
    if bias.shape() != [c] {
        return Err(NumError::ShapeMismatch {
            op: "add_channel_bias",
            lhs: input.shape().to_vec(),
            rhs: bias.shape().to_vec(),
        });
    }
    let hw = h * w;
    let mut data = input.data().to_vec();
    for bi in 0..b {
        for ch in 0..c {
            let bv = bias.data()[ch];
            for v in &mut data[(bi * c + ch) * hw..(bi * c + ch + 1) * hw] {
                *v += bv;
            }
        }
    }
    Tensor::from_op(
        input.shape().to_vec(),
        data,
        vec![input.clone(), bias.clone()],
        Op::AddChannelBias,
    )
}

const MBSTD_EPS: f64 = 1e-8;

/// Appends one channel holding the batch standard deviation averaged
/// over all features and pixels. With a single-element batch the
/// channel is exactly zero.
pub fn minibatch_stddev(input: &Tensor) -> Result<Tensor> {
    let [b, c, h, w] = input.shape() else {
        return Err(NumError::BadShape {
            op: "minibatch_stddev",
            expected: "[B,C,H,W] input".into(),
            got: input.shape().to_vec(),
        });
    };
    let (b, c, h, w) = (*b, *c, *h, *w);
    let hw = h * w;
    let x = input.data();
    let s = if b <= 1 {
        0.0
    } else {
        let mut acc = 0.0;
        for f in 0..c * hw {
            let mut mean = 0.0;
            for bi in 0..b {
                mean += x[bi * c * hw + f];
            }
            mean /= b as f64;
            let mut var = 0.0;
            for bi in 0..b {
                let d = x[bi * c * hw + f] - mean;
                var += d * d;
            }
            var /= b as f64;
            acc += (var + MBSTD_EPS).sqrt();
        }
        acc / (c * hw) as f64
    };
    let mut data = vec![0.0; b * (c + 1) * hw];
    for bi in 0..b {
        data[bi * (c + 1) * hw..bi * (c + 1) * hw + c * hw]
            .copy_from_slice(&x[bi * c * hw..(bi + 1) * c * hw]);
        for v in &mut data[bi * (c + 1) * hw + c * hw..(bi + 1) * (c + 1) * hw] {
            *v = s;
        }
    }
    Tensor::from_op(
        vec![b, c + 1, h, w],
        data,
        vec![input.clone()],
        Op::MinibatchStddev { eps: MBSTD_EPS },
    )
}

/// Coordinate-wise arithmetic mean of equal-shape tensors. Each
/// coordinate sums its inputs in sorted value order, so the result is
/// bitwise invariant under permutation of the inputs.
pub fn average(tensors: &[Tensor]) -> Result<Tensor> {
    let first = tensors.first().ok_or(NumError::EmptyInput { op: "average" })?;
    for t in tensors {
        if t.shape() != first.shape() {
            return Err(NumError::ShapeMismatch {
                op: "average",
                lhs: first.shape().to_vec(),
                rhs: t.shape().to_vec(),
            });
        }
    }
    let k = tensors.len();
    let n = first.numel();
    let mut data = vec![0.0; n];
    let mut vals = vec![0.0; k];
    for (j, out) in data.iter_mut().enumerate() {
        for (slot, t) in vals.iter_mut().zip(tensors) {
            *slot = t.data()[j];
        }
        vals.sort_by(|a, b| a.total_cmp(b));
        let mut acc = 0.0;
        for v in &vals {
            acc += v;
        }
        *out = acc / k as f64;
    }
    Tensor::from_op(first.shape().to_vec(), data, tensors.to_vec(), Op::AverageK)
}

// ---------------------------------------------------------------------------
// backward dispatch
// ---------------------------------------------------------------------------

impl Op {
    /// Gradient flowing to each parent, index-aligned with
    /// `node.parents`. `None` marks a parent that does not need one.
    pub(crate) fn parent_grads(&self, node: &Node, g: &[f64]) -> Vec<Option<Vec<f64>>> {
        let parents = &node.parents;
        let pdata = |i: usize| parents[i].0.data.as_slice();
        let needs = |i: usize| parents[i].0.requires_grad;
        match self {
            Op::Add => {
                let ga = needs(0).then(|| g.to_vec());
                let gb = needs(1).then(|| {
                    let bn = parents[1].numel();
                    if bn == g.len() {
                        g.to_vec()
                    } else {
                        let mut gb = vec![0.0; bn];
                        for (i, gv) in g.iter().enumerate() {
                            gb[i % bn] += gv;
                        }
                        gb
                    }
                });
                vec![ga, gb]
            }
            Op::Mul => {
                let ga = needs(0)
                    .then(|| g.iter().zip(pdata(1)).map(|(gv, bv)| gv * bv).collect());
                let gb = needs(1)
                    .then(|| g.iter().zip(pdata(0)).map(|(gv, av)| gv * av).collect());
                vec![ga, gb]
            }
            Op::Matmul => {
                let a = &parents[0];
                let b = &parents[1];
                let (m, k) = match a.shape() {
                    [k] => (1, *k),
                    [m, k] => (*m, *k),
                    _ => unreachable!(),
                };
                let n = b.shape()[1];
                let ga = needs(0).then(|| gemm_a_bt(g, b.data(), m, n, k));
                let gb = needs(1).then(|| gemm_at_b(a.data(), g, m, k, n));
                vec![ga, gb]
            }
            Op::Scale(c) => vec![Some(g.iter().map(|gv| gv * c).collect())],
            Op::AddScalar | Op::Reshape => vec![Some(g.to_vec())],
            Op::Sum => {
                let n = parents[0].numel();
                vec![Some(vec![g[0]; n])]
            }
            Op::Mean => {
                let n = parents[0].numel();
                vec![Some(vec![g[0] / n as f64; n])]
            }
            Op::Concat { axis } => {
                let sa = parents[0].shape();
                let sb = parents[1].shape();
                let outer: usize = sa[..*axis].iter().product();
                let inner: usize = sa[*axis + 1..].iter().product();
                let (la, lb) = (sa[*axis], sb[*axis]);
                let mut ga = vec![0.0; parents[0].numel()];
                let mut gb = vec![0.0; parents[1].numel()];
                let step = (la + lb) * inner;
                for o in 0..outer {
                    ga[o * la * inner..(o + 1) * la * inner]
                        .copy_from_slice(&g[o * step..o * step + la * inner]);
                    gb[o * lb * inner..(o + 1) * lb * inner]
                        .copy_from_slice(&g[o * step + la * inner..(o + 1) * step]);
                }
                vec![Some(ga), Some(gb)]
            }
            Op::LeakyRelu(slope) => {
                let gx = g
                    .iter()
                    .zip(pdata(0))
                    .map(|(gv, &x)| if x >= 0.0 { *gv } else { gv * slope })
                    .collect();
                vec![Some(gx)]
            }
            Op::PixelNorm { eps } => {
                let x = pdata(0);
                let (outer, c, inner) = channel_view(parents[0].shape()).unwrap();
                let mut gx = vec![0.0; x.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let mut ssq = 0.0;
                        let mut dot = 0.0;
                        for ch in 0..c {
                            let idx = (o * c + ch) * inner + i;
                            ssq += x[idx] * x[idx];
                            dot += g[idx] * x[idx];
                        }
                        let r = 1.0 / (ssq / c as f64 + eps).sqrt();
                        let r3 = r * r * r / c as f64;
                        for ch in 0..c {
                            let idx = (o * c + ch) * inner + i;
                            gx[idx] = r * g[idx] - dot * r3 * x[idx];
                        }
                    }
                }
                vec![Some(gx)]
            }
            Op::Softmax => {
                let y = &node.data;
                let (outer, c, inner) = channel_view(&node.shape).unwrap();
                let mut gx = vec![0.0; y.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let mut dot = 0.0;
                        for ch in 0..c {
                            let idx = (o * c + ch) * inner + i;
                            dot += g[idx] * y[idx];
                        }
                        for ch in 0..c {
                            let idx = (o * c + ch) * inner + i;
                            gx[idx] = y[idx] * (g[idx] - dot);
                        }
                    }
                }
                vec![Some(gx)]
            }
            Op::LogSoftmax => {
                let y = &node.data; // log-probabilities
                let (outer, c, inner) = channel_view(&node.shape).unwrap();
                let mut gx = vec![0.0; y.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let mut gsum = 0.0;
                        for ch in 0..c {
                            gsum += g[(o * c + ch) * inner + i];
                        }
                        for ch in 0..c {
                            let idx = (o * c + ch) * inner + i;
                            gx[idx] = g[idx] - y[idx].exp() * gsum;
                        }
                    }
                }
                vec![Some(gx)]
            }
            Op::Embedding { index } => {
                let width = parents[0].shape()[1];
                let mut gt = vec![0.0; parents[0].numel()];
                gt[index * width..(index + 1) * width].copy_from_slice(g);
                vec![Some(gt)]
            }
            Op::Upsample2x => {
                let shape = parents[0].shape();
                let (b, c, h, w) = image_dims("upsample2x", shape).unwrap();
                vec![Some(conv::upsample2x_backward(g, b * c, h, w))]
            }
            Op::Conv2d { stride, pad } => {
                let input = &parents[0];
                let weight = &parents[1];
                let [b, ci, h, w] = *input.shape() else { unreachable!() };
                let [co, _, k, _] = *weight.shape() else { unreachable!() };
                let (ho, wo) = (node.shape[2], node.shape[3]);
                let gin = needs(0).then(|| {
                    conv::conv2d_input_grad(
                        g,
                        weight.data(),
                        b,
                        ci,
                        h,
                        w,
                        co,
                        k,
                        *stride,
                        *pad,
                        ho,
                        wo,
                    )
                });
                let gw = needs(1).then(|| {
                    conv::conv2d_weight_grad(
                        g,
                        input.data(),
                        b,
                        ci,
                        h,
                        w,
                        co,
                        k,
                        *stride,
                        *pad,
                        ho,
                        wo,
                    )
                });
                vec![gin, gw]
            }
            Op::ModConv2d { pad, demodulate, eps } => {
                let input = &parents[0];
                let weight = &parents[1];
                let style = &parents[2];
                let [b, ci, h, w] = *input.shape() else { unreachable!() };
                let [co, _, k, _] = *weight.shape() else { unreachable!() };
                let (ho, wo) = (node.shape[2], node.shape[3]);
                let kk = k * k;
                let (mw, demod) =
                    modulate_weight(weight.data(), style.data(), co, ci, k, *demodulate, *eps);

                let gin = needs(0).then(|| {
                    conv::conv2d_input_grad(g, &mw, b, ci, h, w, co, k, 1, *pad, ho, wo)
                });

                let (gw, gs) = if needs(1) || needs(2) {
                    // Gradient w.r.t. the effective (modulated) weight.
                    let geff = conv::conv2d_weight_grad(
                        g,
                        input.data(),
                        b,
                        ci,
                        h,
                        w,
                        co,
                        k,
                        1,
                        *pad,
                        ho,
                        wo,
                    );
                    // Undo demodulation: m = w*s, d = (sum m^2 + eps)^-1/2,
                    // eff = m*d  =>  dL/dm = d*G - (G.m) d^3 m.
                    let mut gm = vec![0.0; geff.len()];
                    for o in 0..co {
                        let base = o * ci * kk;
                        if *demodulate {
                            let d = demod[o];
                            let mut dot = 0.0;
                            for t in 0..ci * kk {
                                // m = eff / d
                                let m_t = mw[base + t] / d;
                                dot += geff[base + t] * m_t;
                            }
                            let d3 = d * d * d;
                            for t in 0..ci * kk {
                                let m_t = mw[base + t] / d;
                                gm[base + t] = d * geff[base + t] - dot * d3 * m_t;
                            }
                        } else {
                            gm[base..base + ci * kk].copy_from_slice(&geff[base..base + ci * kk]);
                        }
                    }
                    let gw = needs(1).then(|| {
                        let mut gw = vec![0.0; weight.numel()];
                        for o in 0..co {
                            for i in 0..ci {
                                let s = style.data()[i];
                                let base = (o * ci + i) * kk;
                                for t in 0..kk {
                                    gw[base + t] = gm[base + t] * s;
                                }
                            }
                        }
                        gw
                    });
                    let gs = needs(2).then(|| {
                        let mut gs = vec![0.0; ci];
                        for i in 0..ci {
                            let mut acc = 0.0;
                            for o in 0..co {
                                let base = (o * ci + i) * kk;
                                for t in 0..kk {
                                    acc += gm[base + t] * weight.data()[base + t];
                                }
                            }
                            gs[i] = acc;
                        }
                        gs
                    });
                    (gw, gs)
                } else {
                    (None, None)
                };
                vec![gin, gw, gs]
            }
            Op::AddChannelBias => {
                let (b, c, h, w) = image_dims("add_channel_bias", parents[0].shape()).unwrap();
                let hw = h * w;
                let gx = needs(0).then(|| g.to_vec());
                let gb = needs(1).then(|| {
                    let mut gb = vec![0.0; c];
                    for bi in 0..b {
                        for ch in 0..c {
                            let mut acc = 0.0;
                            for v in &g[(bi * c + ch) * hw..(bi * c + ch + 1) * hw] {
                                acc += v;
                            }
                            gb[ch] += acc;
                        }
                    }
                    gb
                });
                vec![gx, gb]
            }
            Op::MinibatchStddev { eps } => {
                let x = pdata(0);
                let [b, c, h, w] = *parents[0].shape() else { unreachable!() };
                let hw = h * w;
                let mut gx = vec![0.0; x.len()];
                // Pass-through for the original channels.
                for bi in 0..b {
                    gx[bi * c * hw..(bi + 1) * c * hw].copy_from_slice(
                        &g[bi * (c + 1) * hw..bi * (c + 1) * hw + c * hw],
                    );
                }
                if b > 1 {
                    let mut gsum = 0.0;
                    for bi in 0..b {
                        for v in &g[bi * (c + 1) * hw + c * hw..(bi + 1) * (c + 1) * hw] {
                            gsum += v;
                        }
                    }
                    if gsum != 0.0 {
                        let scale = gsum / (c * hw) as f64;
                        for f in 0..c * hw {
                            let mut mean = 0.0;
                            for bi in 0..b {
                                mean += x[bi * c * hw + f];
                            }
                            mean /= b as f64;
                            let mut var = 0.0;
                            for bi in 0..b {
                                let d = x[bi * c * hw + f] - mean;
                                var += d * d;
                            }
                            var /= b as f64;
                            let sd = (var + eps).sqrt();
                            for bi in 0..b {
                                gx[bi * c * hw + f] +=
                                    scale * (x[bi * c * hw + f] - mean) / (b as f64 * sd);
                            }
                        }
                    }
                }
                vec![Some(gx)]
            }
            Op::AverageK => {
                let k = parents.len() as f64;
                let share: Vec<f64> = g.iter().map(|gv| gv / k).collect();
                parents.iter().map(|_| Some(share.clone())).collect()
            }
        }
    }
}

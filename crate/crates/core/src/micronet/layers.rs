//! Convolution and pooling kernels.
//!
//! Every spatial kernel uses zero padding of `floor(n/2)` and produces a
//! `ceil(extent / stride)` output extent, so stride-1 layers preserve the
//! spatial size. Accumulation order is fixed (channel, then row, then
//! column), which keeps outputs bit-identical across runs.

use crate::num::{real_usize, Real};

use super::tensor::Tensor3;
use super::MicronetError;

fn out_extent(extent: usize, stride: usize) -> usize {
    extent.div_ceil(stride)
}

fn shape_err(context: &str, detail: String) -> MicronetError {
    MicronetError::ShapeMismatch { context: context.into(), detail }
}

/// Standard convolution: `k` filters of shape `c x n x n`, weight layout
/// `[k][c][n][n]`, optional bias of length `k`.
pub fn conv2d<F: Real>(
    x: &Tensor3<F>,
    weight: &[F],
    bias: Option<&[F]>,
    out_channels: usize,
    kernel: usize,
    stride: usize,
) -> Result<Tensor3<F>, MicronetError> {
    let (c, h, w) = x.shape();
    check_conv_args("conv2d", kernel, stride)?;
    if weight.len() != out_channels * c * kernel * kernel {
        return Err(shape_err(
            "conv2d",
            format!(
                "weight length {} != {out_channels}*{c}*{kernel}*{kernel}",
                weight.len()
            ),
        ));
    }
    check_bias("conv2d", bias, out_channels)?;
    let (oh, ow) = (out_extent(h, stride), out_extent(w, stride));
    let pad = (kernel / 2) as isize;
    let mut out = Tensor3::zeros(out_channels, oh, ow);
    for k in 0..out_channels {
        let b = bias.map_or(F::zero(), |b| b[k]);
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = F::zero();
                for ch in 0..c {
                    let base = ((k * c) + ch) * kernel * kernel;
                    acc += window_dot(x, ch, oy, ox, stride, kernel, pad, &weight[base..]);
                }
                out.set(k, oy, ox, acc + b);
            }
        }
    }
    Ok(out)
}

/// Depthwise convolution: one `n x n` filter per input channel, weight
/// layout `[c][n][n]`, optional bias of length `c`.
pub fn depthwise_conv<F: Real>(
    x: &Tensor3<F>,
    weight: &[F],
    bias: Option<&[F]>,
    kernel: usize,
    stride: usize,
) -> Result<Tensor3<F>, MicronetError> {
    let (c, h, w) = x.shape();
    check_conv_args("depthwise_conv", kernel, stride)?;
    if weight.len() != c * kernel * kernel {
        return Err(shape_err(
            "depthwise_conv",
            format!("weight length {} != {c} filters of {kernel}x{kernel}", weight.len()),
        ));
    }
    check_bias("depthwise_conv", bias, c)?;
    let (oh, ow) = (out_extent(h, stride), out_extent(w, stride));
    let pad = (kernel / 2) as isize;
    let mut out = Tensor3::zeros(c, oh, ow);
    for ch in 0..c {
        let b = bias.map_or(F::zero(), |b| b[ch]);
        let base = ch * kernel * kernel;
        for oy in 0..oh {
            for ox in 0..ow {
                let acc = window_dot(x, ch, oy, ox, stride, kernel, pad, &weight[base..]);
                out.set(ch, oy, ox, acc + b);
            }
        }
    }
    Ok(out)
}

/// Pointwise (1x1) convolution: per-pixel linear map across channels,
/// weight layout `[k][c]`, optional bias of length `k`.
pub fn pointwise_conv<F: Real>(
    x: &Tensor3<F>,
    weight: &[F],
    bias: Option<&[F]>,
    out_channels: usize,
) -> Result<Tensor3<F>, MicronetError> {
    let (c, h, w) = x.shape();
    if weight.len() != out_channels * c {
        return Err(shape_err(
            "pointwise_conv",
            format!("weight length {} != {out_channels}x{c}", weight.len()),
        ));
    }
    check_bias("pointwise_conv", bias, out_channels)?;
    let mut out = Tensor3::zeros(out_channels, h, w);
    for k in 0..out_channels {
        let b = bias.map_or(F::zero(), |b| b[k]);
        let row = &weight[k * c..(k + 1) * c];
        for y in 0..h {
            for x_ in 0..w {
                let mut acc = F::zero();
                for ch in 0..c {
                    acc += row[ch] * x.get(ch, y, x_);
                }
                out.set(k, y, x_, acc + b);
            }
        }
    }
    Ok(out)
}

/// Clamp every element to `[0, 6]` in place.
pub fn relu6<F: Real>(x: &mut Tensor3<F>) {
    let six = real_usize::<F>(6);
    for v in x.data_mut() {
        *v = v.max(F::zero()).min(six);
    }
}

/// Per-channel spatial mean.
pub fn global_avg_pool<F: Real>(x: &Tensor3<F>) -> Vec<F> {
    let (c, h, w) = x.shape();
    let norm = real_usize::<F>(h * w);
    (0..c)
        .map(|ch| x.channel(ch).iter().fold(F::zero(), |a, &v| a + v) / norm)
        .collect()
}

/// Fully connected layer: weight layout `[out][in]`, optional bias.
pub fn linear<F: Real>(
    x: &[F],
    weight: &[F],
    bias: Option<&[F]>,
    out_dim: usize,
) -> Result<Vec<F>, MicronetError> {
    let in_dim = x.len();
    if weight.len() != out_dim * in_dim {
        return Err(shape_err(
            "linear",
            format!("weight length {} != {out_dim}x{in_dim}", weight.len()),
        ));
    }
    check_bias("linear", bias, out_dim)?;
    Ok((0..out_dim)
        .map(|o| {
            let row = &weight[o * in_dim..(o + 1) * in_dim];
            let mut acc = F::zero();
            for (wv, xv) in row.iter().zip(x) {
                acc += *wv * *xv;
            }
            acc + bias.map_or(F::zero(), |b| b[o])
        })
        .collect())
}

#[inline]
fn window_dot<F: Real>(
    x: &Tensor3<F>,
    ch: usize,
    oy: usize,
    ox: usize,
    stride: usize,
    kernel: usize,
    pad: isize,
    weight: &[F],
) -> F {
    let (_, h, w) = x.shape();
    let y0 = (oy * stride) as isize - pad;
    let x0 = (ox * stride) as isize - pad;
    let mut acc = F::zero();
    for ky in 0..kernel {
        let iy = y0 + ky as isize;
        if iy < 0 || iy >= h as isize {
            continue;
        }
        for kx in 0..kernel {
            let ix = x0 + kx as isize;
            if ix < 0 || ix >= w as isize {
                continue;
            }
            acc += weight[ky * kernel + kx] * x.get(ch, iy as usize, ix as usize);
        }
    }
    acc
}

fn check_conv_args(context: &str, kernel: usize, stride: usize) -> Result<(), MicronetError> {
    if kernel == 0 || !(1..=2).contains(&stride) {
        return Err(shape_err(
            context,
            format!("kernel {kernel} and stride {stride} outside supported range"),
        ));
    }
    Ok(())
}

fn check_bias<F>(context: &str, bias: Option<&[F]>, expected: usize) -> Result<(), MicronetError> {
    match bias {
        Some(b) if b.len() != expected => Err(shape_err(
            context,
            format!("bias length {} != {expected}", b.len()),
        )),
        _ => Ok(()),
    }
}

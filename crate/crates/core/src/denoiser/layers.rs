//! Hand-differentiated building blocks on planar `C x H x W` tensors.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self { channels, height, width, data: vec![0.0; channels * height * width] }
    }

    pub fn plane(&self) -> usize {
        self.height * self.width
    }

    pub fn same_dims(&self, other: &Tensor) -> bool {
        self.channels == other.channels && self.height == other.height && self.width == other.width
    }

    pub fn with_data(&self, data: Vec<f64>) -> Tensor {
        debug_assert_eq!(data.len(), self.data.len());
        Tensor { channels: self.channels, height: self.height, width: self.width, data }
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        debug_assert!(self.same_dims(other));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}

/// Columns `ox` whose tap `ox * stride + kx - 1` lands inside `0..width`.
#[inline]
fn tap_range(kx: usize, stride: usize, width: usize, out_width: usize) -> std::ops::Range<usize> {
    let start = if kx == 0 { 1usize.div_ceil(stride) } else { 0 };
    // ox * stride + kx - 1 <= width - 1  <=>  ox <= (width - kx) / stride
    let end = if width + 1 > kx { ((width - kx) / stride + 1).min(out_width) } else { 0 };
    start..end.max(start)
}

/// Output size of a 3x3 convolution with zero padding 1.
pub fn conv_out_dims(height: usize, width: usize, stride: usize) -> (usize, usize) {
    ((height - 1) / stride + 1, (width - 1) / stride + 1)
}

/// Unfolds 3x3 neighbourhoods into a `(C * 9) x (OH * OW)` row-major matrix.
fn im2col(input: &Tensor, stride: usize, oh: usize, ow: usize) -> Vec<f64> {
    let (h, w) = (input.height, input.width);
    let p = oh * ow;
    let mut col = vec![0.0; input.channels * 9 * p];
    for i in 0..input.channels {
        let plane = &input.data[i * h * w..(i + 1) * h * w];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &mut col[((i * 3 + ky) * 3 + kx) * p..][..p];
                let cols = tap_range(kx, stride, w, ow);
                for oy in 0..oh {
                    let iy = (oy * stride + ky) as isize - 1;
                    if iy < 0 || iy as usize >= h {
                        continue;
                    }
                    let src = &plane[iy as usize * w..];
                    let dst = &mut row[oy * ow..(oy + 1) * ow];
                    for ox in cols.clone() {
                        dst[ox] = src[ox * stride + kx - 1];
                    }
                }
            }
        }
    }
    col
}

/// Adjoint of [`im2col`]: scatters columns back onto a `channels x h x w` tensor.
fn col2im(col: &[f64], channels: usize, h: usize, w: usize, stride: usize, oh: usize, ow: usize) -> Tensor {
    let p = oh * ow;
    let mut out = Tensor::zeros(channels, h, w);
    for i in 0..channels {
        let plane = &mut out.data[i * h * w..(i + 1) * h * w];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &col[((i * 3 + ky) * 3 + kx) * p..][..p];
                let cols = tap_range(kx, stride, w, ow);
                for oy in 0..oh {
                    let iy = (oy * stride + ky) as isize - 1;
                    if iy < 0 || iy as usize >= h {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * w..];
                    let src = &row[oy * ow..(oy + 1) * ow];
                    for ox in cols.clone() {
                        dst[ox * stride + kx - 1] += src[ox];
                    }
                }
            }
        }
    }
    out
}

/// `c = a * b + beta * c` for row-major operands given by (rows, cols, row stride, col stride).
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    rsa: usize,
    csa: usize,
    b: &[f64],
    rsb: usize,
    csb: usize,
    beta: f64,
    c: &mut [f64],
) {
    assert!(c.len() >= m * n);
    assert!(m == 0 || k == 0 || a.len() > (m - 1) * rsa + (k - 1) * csa);
    assert!(k == 0 || n == 0 || b.len() > (k - 1) * rsb + (n - 1) * csb);
    // SAFETY: the asserts above bound every index the kernel touches.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// 3x3 convolution, zero padding 1. Weights are laid out `[out][in][ky][kx]`.
pub fn conv3x3_forward(input: &Tensor, weight: &[f64], bias: &[f64], stride: usize) -> Tensor {
    let ci = input.channels;
    let co = bias.len();
    assert_eq!(weight.len(), co * ci * 9);
    let (oh, ow) = conv_out_dims(input.height, input.width, stride);
    let p = oh * ow;
    let col = im2col(input, stride, oh, ow);
    let mut out = Tensor::zeros(co, oh, ow);
    for (o, &b) in bias.iter().enumerate() {
        out.data[o * p..(o + 1) * p].fill(b);
    }
    gemm(co, ci * 9, p, weight, ci * 9, 1, &col, p, 1, 1.0, &mut out.data);
    out
}

/// Gradients of [`conv3x3_forward`]: accumulates into `grad_weight` and
/// `grad_bias`, returns the input gradient.
pub fn conv3x3_backward(
    input: &Tensor,
    weight: &[f64],
    grad_out: &Tensor,
    stride: usize,
    grad_weight: &mut [f64],
    grad_bias: &mut [f64],
) -> Tensor {
    let ci = input.channels;
    let co = grad_out.channels;
    let k = ci * 9;
    let (oh, ow) = (grad_out.height, grad_out.width);
    let p = oh * ow;
    for (o, gb) in grad_bias.iter_mut().enumerate().take(co) {
        *gb += grad_out.data[o * p..(o + 1) * p].iter().sum::<f64>();
    }
    let col = im2col(input, stride, oh, ow);
    // dW (co x k) += dY (co x p) . col^T (p x k)
    gemm(co, p, k, &grad_out.data, p, 1, &col, 1, p, 1.0, grad_weight);
    // dcol (k x p) = W^T (k x co) . dY (co x p)
    let mut grad_col = vec![0.0; k * p];
    gemm(k, co, p, weight, 1, k, &grad_out.data, p, 1, 0.0, &mut grad_col);
    col2im(&grad_col, ci, input.height, input.width, stride, oh, ow)
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn silu_forward(pre: &Tensor) -> Tensor {
    pre.with_data(pre.data.iter().map(|&x| x * sigmoid(x)).collect())
}

pub fn silu_backward(pre: &Tensor, grad_out: &Tensor) -> Tensor {
    let data = pre
        .data
        .iter()
        .zip(&grad_out.data)
        .map(|(&x, &g)| {
            let s = sigmoid(x);
            g * s * (1.0 + x * (1.0 - s))
        })
        .collect();
    pre.with_data(data)
}

/// Nearest-neighbour 2x upsampling.
pub fn upsample2_forward(input: &Tensor) -> Tensor {
    let (h, w) = (input.height, input.width);
    let mut out = Tensor::zeros(input.channels, 2 * h, 2 * w);
    for c in 0..input.channels {
        for y in 0..2 * h {
            for x in 0..2 * w {
                out.data[(c * 2 * h + y) * 2 * w + x] = input.data[(c * h + y / 2) * w + x / 2];
            }
        }
    }
    out
}

pub fn upsample2_backward(grad_out: &Tensor) -> Tensor {
    let (h, w) = (grad_out.height / 2, grad_out.width / 2);
    let mut grad_in = Tensor::zeros(grad_out.channels, h, w);
    for c in 0..grad_out.channels {
        for y in 0..2 * h {
            for x in 0..2 * w {
                grad_in.data[(c * h + y / 2) * w + x / 2] += grad_out.data[(c * 2 * h + y) * 2 * w + x];
            }
        }
    }
    grad_in
}

/// `weight @ input + bias` with `weight` laid out `[out][in]`.
pub fn linear_forward(input: &[f64], weight: &[f64], bias: &[f64]) -> Vec<f64> {
    let n = input.len();
    bias.iter()
        .enumerate()
        .map(|(o, &b)| b + weight[o * n..(o + 1) * n].iter().zip(input).map(|(w, x)| w * x).sum::<f64>())
        .collect()
}

/// Accumulates parameter gradients of [`linear_forward`]; the input is a
/// constant (the time embedding) so its gradient is not formed.
pub fn linear_backward(input: &[f64], grad_out: &[f64], grad_weight: &mut [f64], grad_bias: &mut [f64]) {
    let n = input.len();
    for (o, &g) in grad_out.iter().enumerate() {
        grad_bias[o] += g;
        for (gw, x) in grad_weight[o * n..(o + 1) * n].iter_mut().zip(input) {
            *gw += g * x;
        }
    }
}

/// Adds `per_channel[c]` to every pixel of channel `c`.
pub fn add_channelwise(t: &mut Tensor, per_channel: &[f64]) {
    let pl = t.plane();
    for (c, &v) in per_channel.iter().enumerate() {
        for x in &mut t.data[c * pl..(c + 1) * pl] {
            *x += v;
        }
    }
}

/// Gradient of [`add_channelwise`] with respect to the per-channel vector.
pub fn channel_sums(grad: &Tensor) -> Vec<f64> {
    let pl = grad.plane();
    (0..grad.channels).map(|c| grad.data[c * pl..(c + 1) * pl].iter().sum()).collect()
}

/// Sinusoidal embedding of `t / T`: `dim / 2` sines then `dim / 2` cosines at
/// frequencies `pi * 10000^(-2k / dim)`.
pub fn time_embed(t: usize, horizon: usize, dim: usize) -> Result<Vec<f64>> {
    if dim == 0 || !dim.is_multiple_of(2) {
        return Err(Error::InvalidConfig(format!("time embedding dim {dim} must be even and positive")));
    }
    if horizon == 0 || t > horizon {
        return Err(Error::StepOutOfRange { t, horizon });
    }
    let s = t as f64 / horizon as f64;
    let half = dim / 2;
    let freqs: Vec<f64> =
        (0..half).map(|k| 10000f64.powf(-2.0 * k as f64 / dim as f64) * std::f64::consts::PI).collect();
    let mut out: Vec<f64> = freqs.iter().map(|w| (w * s).sin()).collect();
    out.extend(freqs.iter().map(|w| (w * s).cos()));
    Ok(out)
}

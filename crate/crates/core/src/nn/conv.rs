//! 1-D convolution and its transpose, lowered to GEMM through im2col.
//!
//! Cross-correlation convention throughout (no kernel flip). A kernel is stored
//! as `[out_ch, in_ch, k]`; [`conv1d_transpose`] uses the kernel of the forward
//! convolution it transposes, so it maps `out_ch` channels back to `in_ch`.

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Geometry of a convolution kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub out_ch: usize,
    pub in_ch: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvSpec {
    pub fn new(out_ch: usize, in_ch: usize, k: usize, stride: usize, pad: usize) -> Self {
        Self { out_ch, in_ch, k, stride, pad }
    }

    pub fn weight_len(&self) -> usize {
        self.out_ch * self.in_ch * self.k
    }
}

/// `floor((t + 2p - k) / s) + 1`, or `None` when the padded input is shorter
/// than the kernel.
pub fn conv1d_out_len(t: usize, k: usize, stride: usize, pad: usize) -> Option<usize> {
    if stride == 0 || k == 0 || t + 2 * pad < k {
        return None;
    }
    Some((t + 2 * pad - k) / stride + 1)
}

/// `(t - 1) s + k - 2p + out_pad`, or `None` when not positive.
pub fn conv1d_transpose_out_len(
    t: usize,
    k: usize,
    stride: usize,
    pad: usize,
    out_pad: usize,
) -> Option<usize> {
    if stride == 0 || k == 0 || t == 0 || out_pad >= stride {
        return None;
    }
    let full = (t - 1) * stride + k + out_pad;
    if full <= 2 * pad {
        return None;
    }
    Some(full - 2 * pad)
}

fn check_weight(spec: &ConvSpec, w: &[f64]) -> Result<()> {
    if w.len() != spec.weight_len() {
        return Err(Error::shape(format!(
            "kernel holds {} values, expected {}x{}x{}",
            w.len(),
            spec.out_ch,
            spec.in_ch,
            spec.k
        )));
    }
    Ok(())
}

/// `cols[(i k + j), t] = x[i, t s + j - p]`, zero outside the input.
pub(crate) fn im2col(x: &[f64], in_ch: usize, len: usize, spec: &ConvSpec, out_len: usize) -> Vec<f64> {
    let k = spec.k;
    let mut cols = vec![0.0; in_ch * k * out_len];
    for i in 0..in_ch {
        let xrow = &x[i * len..(i + 1) * len];
        for j in 0..k {
            let dst = &mut cols[(i * k + j) * out_len..(i * k + j + 1) * out_len];
            for (t, d) in dst.iter_mut().enumerate() {
                let src = (t * spec.stride + j) as isize - spec.pad as isize;
                if src >= 0 && (src as usize) < len {
                    *d = xrow[src as usize];
                }
            }
        }
    }
    cols
}

/// Scatter-add inverse of [`im2col`] into a `[in_ch, len]` buffer.
pub(crate) fn col2im(cols: &[f64], in_ch: usize, len: usize, spec: &ConvSpec, out_len: usize) -> Vec<f64> {
    let k = spec.k;
    let mut x = vec![0.0; in_ch * len];
    for i in 0..in_ch {
        for j in 0..k {
            let src = &cols[(i * k + j) * out_len..(i * k + j + 1) * out_len];
            let xrow = &mut x[i * len..(i + 1) * len];
            for (t, s) in src.iter().enumerate() {
                let dst = (t * spec.stride + j) as isize - spec.pad as isize;
                if dst >= 0 && (dst as usize) < len {
                    xrow[dst as usize] += s;
                }
            }
        }
    }
    x
}

/// `c (m x n) = alpha * op(a) (m x k) * op(b) (k x n) + beta * c`, row-major
/// storage with optional transposition of either operand.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_trans: bool,
    b: &[f64],
    b_trans: bool,
    beta: f64,
    c: &mut [f64],
) {
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        for v in c.iter_mut() {
            *v *= beta;
        }
        return;
    }
    let (rsa, csa) = if a_trans { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_trans { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the slices hold m*k, k*n and m*n elements respectively, which is
    // exactly the extent addressed by the strides above.
    debug_assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Strided, zero-padded 1-D cross-correlation. `x` is `[in_ch, t]`, the result
/// `[out_ch, floor((t + 2p - k) / s) + 1]`.
pub fn conv1d(x: &Tensor, w: &[f64], spec: &ConvSpec) -> Result<Tensor> {
    Ok(conv1d_with_cols(x, w, spec)?.0)
}

/// Forward convolution that also returns the im2col buffer for reuse in the
/// backward pass.
pub(crate) fn conv1d_with_cols(x: &Tensor, w: &[f64], spec: &ConvSpec) -> Result<(Tensor, Vec<f64>)> {
    check_weight(spec, w)?;
    if x.channels() != spec.in_ch {
        return Err(Error::shape(format!(
            "conv1d input has {} channels, kernel expects {}",
            x.channels(),
            spec.in_ch
        )));
    }
    let out_len = conv1d_out_len(x.length(), spec.k, spec.stride, spec.pad).ok_or_else(|| {
        Error::shape(format!(
            "conv1d input length {} with padding {} is shorter than kernel {}",
            x.length(),
            spec.pad,
            spec.k
        ))
    })?;
    let cols = im2col(x.data(), spec.in_ch, x.length(), spec, out_len);
    let mut out = vec![0.0; spec.out_ch * out_len];
    gemm(spec.out_ch, spec.in_ch * spec.k, out_len, w, false, &cols, false, 0.0, &mut out);
    Ok((Tensor::new(spec.out_ch, out_len, out)?, cols))
}

/// Adjoint of [`conv1d`] with respect to its input. `x` is `[out_ch, t]`; the
/// result is `[in_ch, (t - 1) s + k - 2p + out_pad]`. The extra `out_pad`
/// trailing positions make stride-2 upsampling land on exactly `2t` frames with
/// odd kernels.
pub fn conv1d_transpose(x: &Tensor, w: &[f64], spec: &ConvSpec, out_pad: usize) -> Result<Tensor> {
    check_weight(spec, w)?;
    if x.channels() != spec.out_ch {
        return Err(Error::shape(format!(
            "conv1d_transpose input has {} channels, kernel expects {}",
            x.channels(),
            spec.out_ch
        )));
    }
    let out_len = conv1d_transpose_out_len(x.length(), spec.k, spec.stride, spec.pad, out_pad)
        .ok_or_else(|| {
            Error::shape(format!(
                "conv1d_transpose of length {} with k {}, s {}, p {}, out_pad {} has no output",
                x.length(),
                spec.k,
                spec.stride,
                spec.pad,
                out_pad
            ))
        })?;
    let t = x.length();
    let ck = spec.in_ch * spec.k;
    let mut cols = vec![0.0; ck * t];
    gemm(ck, spec.out_ch, t, w, true, x.data(), false, 0.0, &mut cols);
    Tensor::new(spec.in_ch, out_len, col2im(&cols, spec.in_ch, out_len, spec, t))
}

/// Gradients of `y = conv1d(x, w)` given `dy` and the saved im2col buffer:
/// returns `(dx, dw)`; `dx` is skipped when `need_dx` is false.
pub(crate) fn conv1d_backward(
    dy: &Tensor,
    w: &[f64],
    cols: &[f64],
    spec: &ConvSpec,
    in_len: usize,
    need_dx: bool,
) -> (Option<Vec<f64>>, Vec<f64>) {
    let out_len = dy.length();
    let ck = spec.in_ch * spec.k;
    let mut dw = vec![0.0; spec.out_ch * ck];
    gemm(spec.out_ch, out_len, ck, dy.data(), false, cols, true, 0.0, &mut dw);
    let dx = need_dx.then(|| {
        let mut dcols = vec![0.0; ck * out_len];
        gemm(ck, spec.out_ch, out_len, w, true, dy.data(), false, 0.0, &mut dcols);
        col2im(&dcols, spec.in_ch, in_len, spec, out_len)
    });
    (dx, dw)
}

/// Gradients of `y = conv1d_transpose(x, w)`: returns `(dx, dw)`.
pub(crate) fn conv1d_transpose_backward(
    dy: &Tensor,
    x: &Tensor,
    w: &[f64],
    spec: &ConvSpec,
    need_dx: bool,
) -> (Option<Vec<f64>>, Vec<f64>) {
    let t = x.length();
    let ck = spec.in_ch * spec.k;
    let dcols = im2col(dy.data(), spec.in_ch, dy.length(), spec, t);
    let mut dw = vec![0.0; spec.out_ch * ck];
    gemm(spec.out_ch, t, ck, x.data(), false, &dcols, true, 0.0, &mut dw);
    let dx = need_dx.then(|| {
        let mut dx = vec![0.0; spec.out_ch * t];
        gemm(spec.out_ch, ck, t, w, false, &dcols, false, 0.0, &mut dx);
        dx
    });
    (dx, dw)
}

//! Convolution, transposed convolution, ReLU, and MSE — forward and backward.
//!
//! The backward passes are written by hand for this fixed layer vocabulary;
//! there is no autodiff graph. Each backward computes the exact adjoint of
//! its forward: given `grad_out`, it returns the gradients of the scalar
//! `sum(grad_out ⊙ output)` with respect to every input.
//!
//! Convolutions are lowered to matrix multiplication through im2col/col2im.
//! The inner GEMM is delegated to `matrixmultiply` (pure Rust, runtime SIMD
//! dispatch); the lowering, padding logic, and all gradient math live here,
//! and the tests check both against an independent direct-loop reference.
//!
//! Layouts: activations are `C×H×W`, convolution kernels `O×C×k×k`,
//! transposed-convolution kernels `C×O×k×k` (input-channel major). All
//! functions are pure: no hidden state.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Gradients returned by the convolution backward passes.
#[derive(Clone, Debug)]
pub struct ConvGrads {
    pub input: Tensor,
    pub kernels: Tensor,
    pub bias: Vec<f64>,
}

// ---------------------------------------------------------------------------
// GEMM + im2col plumbing
// ---------------------------------------------------------------------------

/// Row-major C[m×n] = alpha·A[m×k]·B[k×n] + beta·C. `at`/`bt` transpose A/B
/// in place via strides (the transposed operand is still given untransposed).
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: &[f64],
    at: bool,
    b: &[f64],
    bt: bool,
    beta: f64,
    c: &mut [f64],
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    let (rsa, csa) = if at { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if bt { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: lengths are checked above; strides describe the same buffers.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
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

/// Unfolds `input` (C×H×W) into a (C·k·k)×(ho·wo) patch matrix for the given
/// receptive-field geometry. Out-of-bounds taps read as zero.
fn im2col(
    input: &[f64],
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    padding: usize,
    ho: usize,
    wo: usize,
) -> Vec<f64> {
    let mut col = vec![0.0; c * k * k * ho * wo];
    let cols = ho * wo;
    for ch in 0..c {
        let plane = &input[ch * h * w..(ch + 1) * h * w];
        for ki in 0..k {
            for kj in 0..k {
                let row = (ch * k + ki) * k + kj;
                let out_row = &mut col[row * cols..(row + 1) * cols];
                for y in 0..ho {
                    let src_y = (y * stride + ki) as isize - padding as isize;
                    if src_y < 0 || src_y >= h as isize {
                        continue;
                    }
                    let src_row = &plane[src_y as usize * w..(src_y as usize + 1) * w];
                    for x in 0..wo {
                        let src_x = (x * stride + kj) as isize - padding as isize;
                        if src_x >= 0 && src_x < w as isize {
                            out_row[y * wo + x] = src_row[src_x as usize];
                        }
                    }
                }
            }
        }
    }
    col
}

/// Adjoint of [`im2col`]: folds a patch matrix back into a C×H×W image,
/// accumulating where patches overlap. Out-of-bounds taps are dropped.
fn col2im(
    col: &[f64],
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    padding: usize,
    ho: usize,
    wo: usize,
) -> Vec<f64> {
    let mut out = vec![0.0; c * h * w];
    let cols = ho * wo;
    for ch in 0..c {
        let plane = &mut out[ch * h * w..(ch + 1) * h * w];
        for ki in 0..k {
            for kj in 0..k {
                let row = (ch * k + ki) * k + kj;
                let col_row = &col[row * cols..(row + 1) * cols];
                for y in 0..ho {
                    let dst_y = (y * stride + ki) as isize - padding as isize;
                    if dst_y < 0 || dst_y >= h as isize {
                        continue;
                    }
                    for x in 0..wo {
                        let dst_x = (x * stride + kj) as isize - padding as isize;
                        if dst_x >= 0 && dst_x < w as isize {
                            plane[dst_y as usize * w + dst_x as usize] += col_row[y * wo + x];
                        }
                    }
                }
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Shape checks
// ---------------------------------------------------------------------------

struct ConvDims {
    c: usize,
    h: usize,
    w: usize,
    o: usize,
    k: usize,
    ho: usize,
    wo: usize,
}

/// Validates convolution shapes. The spatial output must come out exact:
/// `(H + 2·padding − k)` has to be a nonnegative multiple of `stride`.
fn conv_dims(
    input: &Tensor,
    kernels: &Tensor,
    bias: &[f64],
    stride: usize,
    padding: usize,
) -> Result<ConvDims> {
    let [c, h, w] = three_d(input, "conv input")?;
    let ks = kernels.shape();
    if ks.len() != 4 {
        return Err(Error::Config(format!("conv kernels must be O×C×k×k, got {ks:?}")));
    }
    let (o, kc, k) = (ks[0], ks[1], ks[2]);
    if ks[3] != k {
        return Err(Error::Config(format!("conv kernels must be square, got {}×{}", k, ks[3])));
    }
    if kc != c {
        return Err(Error::Config(format!(
            "conv kernel channel count {kc} does not match input channels {c}"
        )));
    }
    if bias.len() != o {
        return Err(Error::Config(format!(
            "conv bias length {} does not match output channels {o}",
            bias.len()
        )));
    }
    if stride == 0 {
        return Err(Error::Config("conv stride must be positive".into()));
    }
    let ho = out_extent(h, k, stride, padding, "height")?;
    let wo = out_extent(w, k, stride, padding, "width")?;
    Ok(ConvDims { c, h, w, o, k, ho, wo })
}

fn out_extent(extent: usize, k: usize, stride: usize, padding: usize, name: &str) -> Result<usize> {
    let padded = extent + 2 * padding;
    if padded < k {
        return Err(Error::Config(format!(
            "conv {name} {extent} (padding {padding}) is smaller than kernel {k}"
        )));
    }
    if (padded - k) % stride != 0 {
        return Err(Error::Config(format!(
            "conv {name} {extent} with kernel {k}, stride {stride}, padding {padding} \
             does not produce an integer output size"
        )));
    }
    Ok((padded - k) / stride + 1)
}

fn three_d(t: &Tensor, what: &str) -> Result<[usize; 3]> {
    let s = t.shape();
    if s.len() != 3 {
        return Err(Error::Config(format!("{what} must be C×H×W, got {s:?}")));
    }
    Ok([s[0], s[1], s[2]])
}

fn check_grad_out(grad_out: &Tensor, o: usize, ho: usize, wo: usize) -> Result<()> {
    if grad_out.shape() != [o, ho, wo] {
        return Err(Error::Config(format!(
            "grad_out shape {:?} does not match forward output [{o}, {ho}, {wo}]",
            grad_out.shape()
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Convolution
// ---------------------------------------------------------------------------

/// Cross-correlation of `input` (C×H×W) with `kernels` (O×C×k×k) plus bias.
pub fn conv2d_forward(
    input: &Tensor,
    kernels: &Tensor,
    bias: &[f64],
    stride: usize,
    padding: usize,
) -> Result<Tensor> {
    let d = conv_dims(input, kernels, bias, stride, padding)?;
    let col = im2col(input.data(), d.c, d.h, d.w, d.k, stride, padding, d.ho, d.wo);
    let mut out = vec![0.0; d.o * d.ho * d.wo];
    // out[O × (ho·wo)] = kernels[O × (C·k·k)] · col
    gemm(d.o, d.c * d.k * d.k, d.ho * d.wo, 1.0, kernels.data(), false, &col, false, 0.0, &mut out);
    let spatial = d.ho * d.wo;
    for (o, &b) in bias.iter().enumerate() {
        for v in &mut out[o * spatial..(o + 1) * spatial] {
            *v += b;
        }
    }
    Tensor::from_vec(&[d.o, d.ho, d.wo], out)
}

/// Gradients of `sum(grad_out ⊙ conv2d_forward(input, kernels, bias))`.
pub fn conv2d_backward(
    grad_out: &Tensor,
    input: &Tensor,
    kernels: &Tensor,
    stride: usize,
    padding: usize,
) -> Result<ConvGrads> {
    let d = conv_dims(input, kernels, &vec![0.0; kernels.shape()[0]], stride, padding)?;
    check_grad_out(grad_out, d.o, d.ho, d.wo)?;
    let spatial = d.ho * d.wo;
    let patch = d.c * d.k * d.k;

    let mut bias = vec![0.0; d.o];
    for o in 0..d.o {
        bias[o] = grad_out.data()[o * spatial..(o + 1) * spatial].iter().sum();
    }

    // grad_kernels[O × patch] = grad_out[O × spatial] · colᵀ
    let col = im2col(input.data(), d.c, d.h, d.w, d.k, stride, padding, d.ho, d.wo);
    let mut grad_kernels = vec![0.0; d.o * patch];
    gemm(d.o, spatial, patch, 1.0, grad_out.data(), false, &col, true, 0.0, &mut grad_kernels);

    // grad_col[patch × spatial] = kernelsᵀ · grad_out, then fold back.
    let mut grad_col = vec![0.0; patch * spatial];
    gemm(patch, d.o, spatial, 1.0, kernels.data(), true, grad_out.data(), false, 0.0, &mut grad_col);
    let grad_input = col2im(&grad_col, d.c, d.h, d.w, d.k, stride, padding, d.ho, d.wo);

    Ok(ConvGrads {
        input: Tensor::from_vec(&[d.c, d.h, d.w], grad_input)?,
        kernels: Tensor::from_vec(kernels.shape(), grad_kernels)?,
        bias,
    })
}

// ---------------------------------------------------------------------------
// Transposed convolution
// ---------------------------------------------------------------------------

struct ConvTDims {
    c: usize,
    h: usize,
    w: usize,
    o: usize,
    k: usize,
    ho: usize,
    wo: usize,
}

fn conv_transpose_dims(
    input: &Tensor,
    kernels: &Tensor,
    bias: &[f64],
    stride: usize,
    padding: usize,
) -> Result<ConvTDims> {
    let [c, h, w] = three_d(input, "transposed-conv input")?;
    let ks = kernels.shape();
    if ks.len() != 4 {
        return Err(Error::Config(format!("transposed-conv kernels must be C×O×k×k, got {ks:?}")));
    }
    let (kc, o, k) = (ks[0], ks[1], ks[2]);
    if ks[3] != k {
        return Err(Error::Config(format!(
            "transposed-conv kernels must be square, got {}×{}",
            k, ks[3]
        )));
    }
    if kc != c {
        return Err(Error::Config(format!(
            "transposed-conv kernel channel count {kc} does not match input channels {c}"
        )));
    }
    if bias.len() != o {
        return Err(Error::Config(format!(
            "transposed-conv bias length {} does not match output channels {o}",
            bias.len()
        )));
    }
    if stride == 0 {
        return Err(Error::Config("transposed-conv stride must be positive".into()));
    }
    let expand = |extent: usize, name: &str| -> Result<usize> {
        let full = (extent - 1) * stride + k;
        if full < 2 * padding + 1 {
            return Err(Error::Config(format!(
                "transposed-conv {name} {extent} with kernel {k}, stride {stride} \
                 is smaller than twice the padding {padding}"
            )));
        }
        Ok(full - 2 * padding)
    };
    let ho = expand(h, "height")?;
    let wo = expand(w, "width")?;
    Ok(ConvTDims { c, h, w, o, k, ho, wo })
}

/// Transposed convolution (fractionally-strided): the exact adjoint of a
/// `conv2d_forward` with the same geometry, mapping H×W up to
/// `(H−1)·stride + k − 2·padding`. Kernels are C×O×k×k.
pub fn conv2d_transpose_forward(
    input: &Tensor,
    kernels: &Tensor,
    bias: &[f64],
    stride: usize,
    padding: usize,
) -> Result<Tensor> {
    let d = conv_transpose_dims(input, kernels, bias, stride, padding)?;
    let patch = d.o * d.k * d.k;
    let spatial_in = d.h * d.w;
    // col[patch × (h·w)] = kernelsᵀ[patch × C] · input[C × (h·w)]
    let mut col = vec![0.0; patch * spatial_in];
    gemm(patch, d.c, spatial_in, 1.0, kernels.data(), true, input.data(), false, 0.0, &mut col);
    // Scatter patches into the enlarged output; overlaps accumulate.
    let mut out = col2im(&col, d.o, d.ho, d.wo, d.k, stride, padding, d.h, d.w);
    let spatial_out = d.ho * d.wo;
    for (o, &b) in bias.iter().enumerate() {
        for v in &mut out[o * spatial_out..(o + 1) * spatial_out] {
            *v += b;
        }
    }
    Tensor::from_vec(&[d.o, d.ho, d.wo], out)
}

/// Gradients of `sum(grad_out ⊙ conv2d_transpose_forward(...))`.
pub fn conv2d_transpose_backward(
    grad_out: &Tensor,
    input: &Tensor,
    kernels: &Tensor,
    stride: usize,
    padding: usize,
) -> Result<ConvGrads> {
    let d = conv_transpose_dims(input, kernels, &vec![0.0; kernels.shape()[1]], stride, padding)?;
    check_grad_out(grad_out, d.o, d.ho, d.wo)?;
    let patch = d.o * d.k * d.k;
    let spatial_in = d.h * d.w;
    let spatial_out = d.ho * d.wo;

    let mut bias = vec![0.0; d.o];
    for o in 0..d.o {
        bias[o] = grad_out.data()[o * spatial_out..(o + 1) * spatial_out].iter().sum();
    }

    // The forward scattered col2im(kernelsᵀ·x); its adjoint gathers patches
    // of grad_out, so both parameter and input gradients run through im2col
    // of grad_out with the same geometry.
    let gcol = im2col(grad_out.data(), d.o, d.ho, d.wo, d.k, stride, padding, d.h, d.w);

    // grad_input[C × spatial_in] = kernels[C × patch] · gcol
    let mut grad_input = vec![0.0; d.c * spatial_in];
    gemm(d.c, patch, spatial_in, 1.0, kernels.data(), false, &gcol, false, 0.0, &mut grad_input);

    // grad_kernels[C × patch] = input[C × spatial_in] · gcolᵀ
    let mut grad_kernels = vec![0.0; d.c * patch];
    gemm(d.c, spatial_in, patch, 1.0, input.data(), false, &gcol, true, 0.0, &mut grad_kernels);

    Ok(ConvGrads {
        input: Tensor::from_vec(&[d.c, d.h, d.w], grad_input)?,
        kernels: Tensor::from_vec(kernels.shape(), grad_kernels)?,
        bias,
    })
}

// ---------------------------------------------------------------------------
// ReLU and MSE
// ---------------------------------------------------------------------------

/// Elementwise max(x, 0).
pub fn relu_forward(x: &Tensor) -> Tensor {
    Tensor::from_fn(x.shape(), |i| x.data()[i].max(0.0))
}

/// ReLU gradient; the derivative at exactly 0 is defined as 0.
pub fn relu_backward(grad_out: &Tensor, x: &Tensor) -> Tensor {
    assert_eq!(grad_out.shape(), x.shape(), "relu_backward shape mismatch");
    Tensor::from_fn(x.shape(), |i| if x.data()[i] > 0.0 { grad_out.data()[i] } else { 0.0 })
}

/// Mean squared error between `a` and `b`, with the gradient w.r.t. `a`
/// (`2(a−b)/N`).
pub fn mse_loss(a: &Tensor, b: &Tensor) -> Result<(f64, Tensor)> {
    if a.shape() != b.shape() {
        return Err(Error::Config(format!(
            "mse_loss shape mismatch: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let n = a.len() as f64;
    let mut loss = 0.0;
    let grad = Tensor::from_fn(a.shape(), |i| {
        let d = a.data()[i] - b.data()[i];
        loss += d * d;
        2.0 * d / n
    });
    Ok((loss / n, grad))
}

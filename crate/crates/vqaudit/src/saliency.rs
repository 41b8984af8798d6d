//! Per-code Grad-CAM heatmaps against the encoder.
//!
//! For a code `c`, the target scalar is the negative quantization distance
//! summed over the grid positions assigned to `c` (all other positions are
//! masked out). Its gradient w.r.t. a chosen encoder activation gives
//! per-channel weights (spatial means); the ReLU'd weighted activation sum,
//! upsampled to frame size and normalized to a max of 1, is the heatmap.
//! Codes that are never selected produce identically-zero maps, which are
//! flagged and counted rather than silently kept.

use serde::{Deserialize, Serialize};

use crate::codec::{stack_backward_to, CodecModel, QuantizedLatent, StackCache};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// How the per-code target scalar is formed from the masked positions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TargetScalar {
    /// −Σ ‖z_e[p] − codes[c]‖² over positions assigned to `c` (default).
    NegQuantizationDistance,
    /// Σ ⟨z_e[p], codes[c]⟩ over positions assigned to `c`.
    MaskedInnerProduct,
}

/// Interpolation used to lift the activation-grid map to frame resolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Upsample {
    Bilinear,
    Nearest,
}

#[derive(Clone, Copy, Debug)]
pub struct SaliencyConfig {
    /// Encoder layer index whose output activation is attributed.
    pub target_layer: usize,
    /// Raw (pre-normalization) max at or below which a map counts as zero.
    pub epsilon: f64,
    pub upsample: Upsample,
    pub target: TargetScalar,
}

impl SaliencyConfig {
    /// Defaults: the last encoder activation, ε = 1e-8, bilinear upsampling,
    /// negative-distance target.
    pub fn default_for_encoder(encoder_layers: usize) -> SaliencyConfig {
        SaliencyConfig {
            target_layer: encoder_layers.saturating_sub(1),
            epsilon: 1e-8,
            upsample: Upsample::Bilinear,
            target: TargetScalar::NegQuantizationDistance,
        }
    }
}

/// One code's attribution map over a frame.
#[derive(Clone, Debug, PartialEq)]
pub struct Heatmap {
    /// Row-major H×W, nonnegative; max is exactly 1 unless the map is zero.
    pub values: Vec<f64>,
    pub height: usize,
    pub width: usize,
    pub episode: u64,
    pub step: u64,
    pub code: usize,
    /// True iff the raw map's max was ≤ ε; the stored values are then all 0.
    pub is_zero: bool,
}

impl Heatmap {
    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(0.0, f64::max)
    }
}

fn check_code(code: usize, codes: &Tensor) -> Result<()> {
    let k = codes.shape()[0];
    if code >= k {
        return Err(Error::Usage(format!("code {code} out of range; codebook has {k} entries")));
    }
    Ok(())
}

impl TargetScalar {
    /// s_c for this latent grid; positions assigned other codes contribute 0.
    pub fn value(&self, latent: &QuantizedLatent, codes: &Tensor, code: usize) -> Result<f64> {
        check_code(code, codes)?;
        let d = codes.shape()[1];
        let spatial = latent.grid_rows * latent.grid_cols;
        let row = &codes.data()[code * d..(code + 1) * d];
        let mut total = 0.0;
        for (p, &a) in latent.assignments.iter().enumerate() {
            if a != code {
                continue;
            }
            for (j, &cj) in row.iter().enumerate() {
                let ze = latent.z_e.data()[j * spatial + p];
                total += match self {
                    TargetScalar::NegQuantizationDistance => -(ze - cj) * (ze - cj),
                    TargetScalar::MaskedInnerProduct => ze * cj,
                };
            }
        }
        Ok(total)
    }

    /// ∂s_c/∂z_e: nonzero only at positions assigned to `code`.
    fn grad_ze(&self, latent: &QuantizedLatent, codes: &Tensor, code: usize) -> Result<Tensor> {
        check_code(code, codes)?;
        let d = codes.shape()[1];
        let spatial = latent.grid_rows * latent.grid_cols;
        let row = &codes.data()[code * d..(code + 1) * d];
        let mut grad = Tensor::zeros(latent.z_e.shape());
        for (p, &a) in latent.assignments.iter().enumerate() {
            if a != code {
                continue;
            }
            for (j, &cj) in row.iter().enumerate() {
                let ze = latent.z_e.data()[j * spatial + p];
                grad.data_mut()[j * spatial + p] = match self {
                    TargetScalar::NegQuantizationDistance => -2.0 * (ze - cj),
                    TargetScalar::MaskedInnerProduct => cj,
                };
            }
        }
        Ok(grad)
    }
}

/// Default target scalar: the negative masked quantization distance.
pub fn code_target_scalar(latent: &QuantizedLatent, codes: &Tensor, code: usize) -> Result<f64> {
    TargetScalar::NegQuantizationDistance.value(latent, codes, code)
}

/// Per-channel weights α: spatial means of ∂s_c/∂A over the target layer's
/// activation A.
fn channel_weights(
    model: &CodecModel,
    cache: &StackCache,
    latent: &QuantizedLatent,
    code: usize,
    config: &SaliencyConfig,
) -> Result<Vec<f64>> {
    let layers = &model.arch.encoder;
    if config.target_layer >= layers.len() {
        return Err(Error::Config(format!(
            "target layer {} out of range; encoder has {} layers",
            config.target_layer,
            layers.len()
        )));
    }
    let grad_ze = config.target.grad_ze(latent, model.codes(), code)?;
    let grad_act = stack_backward_to(
        layers,
        &model.encoder,
        "enc",
        cache,
        &grad_ze,
        config.target_layer + 1,
    )?;
    grad_act.check_finite(&format!("target-layer gradient for code {code}"))?;
    let channels = grad_act.shape()[0];
    let spatial: usize = grad_act.shape()[1..].iter().product();
    let mut alpha = Vec::with_capacity(channels);
    for k in 0..channels {
        let sum: f64 = grad_act.data()[k * spatial..(k + 1) * spatial].iter().sum();
        alpha.push(sum / spatial as f64);
    }
    Ok(alpha)
}

/// ReLU(Σ_k α_k·A_k) over the activation grid.
fn weighted_activation_map(activation: &Tensor, alpha: &[f64]) -> Vec<f64> {
    let spatial: usize = activation.shape()[1..].iter().product();
    let mut map = vec![0.0; spatial];
    for (k, &a) in alpha.iter().enumerate() {
        for p in 0..spatial {
            map[p] += a * activation.data()[k * spatial + p];
        }
    }
    for v in &mut map {
        *v = v.max(0.0);
    }
    map
}

/// Bilinear resampling with pixel-center alignment (matches the image
/// resizer's convention).
pub fn upsample_bilinear(
    values: &[f64],
    src_h: usize,
    src_w: usize,
    dst_h: usize,
    dst_w: usize,
) -> Vec<f64> {
    debug_assert_eq!(values.len(), src_h * src_w);
    let mut out = vec![0.0; dst_h * dst_w];
    let scale_y = src_h as f64 / dst_h as f64;
    let scale_x = src_w as f64 / dst_w as f64;
    for y in 0..dst_h {
        let sy = ((y as f64 + 0.5) * scale_y - 0.5).clamp(0.0, (src_h - 1) as f64);
        let y0 = sy.floor() as usize;
        let y1 = (y0 + 1).min(src_h - 1);
        let fy = sy - y0 as f64;
        for x in 0..dst_w {
            let sx = ((x as f64 + 0.5) * scale_x - 0.5).clamp(0.0, (src_w - 1) as f64);
            let x0 = sx.floor() as usize;
            let x1 = (x0 + 1).min(src_w - 1);
            let fx = sx - x0 as f64;
            let top = values[y0 * src_w + x0] * (1.0 - fx) + values[y0 * src_w + x1] * fx;
            let bottom = values[y1 * src_w + x0] * (1.0 - fx) + values[y1 * src_w + x1] * fx;
            out[y * dst_w + x] = top * (1.0 - fy) + bottom * fy;
        }
    }
    out
}

/// Nearest-neighbor resampling with the same center alignment.
pub fn upsample_nearest(
    values: &[f64],
    src_h: usize,
    src_w: usize,
    dst_h: usize,
    dst_w: usize,
) -> Vec<f64> {
    debug_assert_eq!(values.len(), src_h * src_w);
    let mut out = vec![0.0; dst_h * dst_w];
    let scale_y = src_h as f64 / dst_h as f64;
    let scale_x = src_w as f64 / dst_w as f64;
    for y in 0..dst_h {
        let sy = (((y as f64 + 0.5) * scale_y - 0.5 + 0.5).floor() as isize)
            .clamp(0, src_h as isize - 1) as usize;
        for x in 0..dst_w {
            let sx = (((x as f64 + 0.5) * scale_x - 0.5 + 0.5).floor() as isize)
                .clamp(0, src_w as isize - 1) as usize;
            out[y * dst_w + x] = values[sy * src_w + sx];
        }
    }
    out
}

/// Grad-CAM heatmap for `code` given precomputed encoder activations and the
/// quantized latent of the same frame (the pipeline entry point; avoids
/// re-encoding per code).
pub fn gradcam_with(
    model: &CodecModel,
    cache: &StackCache,
    latent: &QuantizedLatent,
    source: (u64, u64),
    code: usize,
    config: &SaliencyConfig,
) -> Result<Heatmap> {
    let alpha = channel_weights(model, cache, latent, code, config)?;
    let activation = &cache.acts[config.target_layer + 1];
    let raw = weighted_activation_map(activation, &alpha);
    let (src_h, src_w) = (activation.shape()[1], activation.shape()[2]);
    let (dst_h, dst_w) = (model.arch.frame_height, model.arch.frame_width);
    let mut values = match config.upsample {
        Upsample::Bilinear => upsample_bilinear(&raw, src_h, src_w, dst_h, dst_w),
        Upsample::Nearest => upsample_nearest(&raw, src_h, src_w, dst_h, dst_w),
    };
    let max = values.iter().cloned().fold(0.0, f64::max);
    if !max.is_finite() {
        return Err(Error::NonFinite(format!("saliency map for code {code}")));
    }
    let is_zero = max <= config.epsilon;
    if is_zero {
        // Keep the zero contract exact: flagged maps hold no residue.
        values.iter_mut().for_each(|v| *v = 0.0);
    } else {
        values.iter_mut().for_each(|v| *v /= max);
    }
    Ok(Heatmap {
        values,
        height: dst_h,
        width: dst_w,
        episode: source.0,
        step: source.1,
        code,
        is_zero,
    })
}

/// Convenience entry: encodes and quantizes the frame, then attributes.
pub fn gradcam(
    model: &CodecModel,
    frame: &Tensor,
    source: (u64, u64),
    code: usize,
    config: &SaliencyConfig,
) -> Result<Heatmap> {
    let cache = model.encode_cached(frame)?;
    let latent = model.quantize(cache.output())?;
    gradcam_with(model, &cache, &latent, source, code, config)
}

/// Splits heatmaps into kept (max > ε) and dropped, reporting the dropped
/// fraction for the audit summary.
pub fn filter_zero(heatmaps: Vec<Heatmap>, epsilon: f64) -> (Vec<Heatmap>, usize, f64) {
    let total = heatmaps.len();
    let kept: Vec<Heatmap> = heatmaps.into_iter().filter(|h| h.max() > epsilon).collect();
    let dropped = total - kept.len();
    let fraction = if total == 0 { 0.0 } else { dropped as f64 / total as f64 };
    (kept, dropped, fraction)
}

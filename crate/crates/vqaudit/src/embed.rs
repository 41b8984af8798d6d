//! Crop descriptors: a handcrafted color + gradient-orientation histogram
//! (the default backend) and the trained encoder's pooled latent (the
//! alternate backend). Both yield L2-normalized vectors so cosine similarity
//! is a plain dot product.

use crate::codec::CodecModel;
use crate::error::{Error, Result};
use crate::image::{resize_bilinear, RgbImage};
use crate::tensor::Tensor;

/// Side length crops are resized to before histogramming.
const RESIZE: usize = 32;
/// Intensity bins per color channel.
const COLOR_BINS: usize = 8;
/// Gradient-orientation bins per cell.
const ORIENT_BINS: usize = 8;
/// Cells per side of the orientation grid.
const CELLS: usize = 4;

/// 3 channels × 8 intensity bins.
pub const COLOR_DIMS: usize = 3 * COLOR_BINS;
/// 4×4 cells × 8 orientation bins.
pub const GRADIENT_DIMS: usize = CELLS * CELLS * ORIENT_BINS;
/// Total handcrafted descriptor length.
pub const DESCRIPTOR_DIM: usize = COLOR_DIMS + GRADIENT_DIMS;

/// An L2-normalized crop embedding, or the zero vector when the raw features
/// vanish (possible for the encoder backend; flagged so statistics can skip
/// it).
#[derive(Clone, Debug, PartialEq)]
pub struct Descriptor {
    pub values: Vec<f64>,
    pub is_zero: bool,
}

impl Descriptor {
    fn from_raw(mut values: Vec<f64>) -> Descriptor {
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm <= 1e-12 {
            values.iter_mut().for_each(|v| *v = 0.0);
            return Descriptor { values, is_zero: true };
        }
        values.iter_mut().for_each(|v| *v /= norm);
        Descriptor { values, is_zero: false }
    }

    /// Cosine similarity; both vectors are unit length so this is the dot
    /// product (zero-flagged descriptors give 0).
    pub fn cosine(&self, other: &Descriptor) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum()
    }
}

/// Rec. 601 luma from [0, 1] RGB.
fn luminance(rgb: &[f64]) -> f64 {
    0.299 * rgb[0] + 0.587 * rgb[1] + 0.114 * rgb[2]
}

/// Handcrafted descriptor: resize to 32×32, per-channel 8-bin intensity
/// histograms (each channel carrying unit mass), and magnitude-weighted
/// gradient-orientation histograms (central differences on luminance, 8
/// angle bins, 4×4 spatial cells), all L2-normalized together.
pub fn embed_crop(crop: &RgbImage) -> Result<Descriptor> {
    if crop.width == 0 || crop.height == 0 {
        return Err(Error::Usage("cannot embed an empty crop".into()));
    }
    let rgb = resize_bilinear(crop, RESIZE, RESIZE);
    let mut raw = vec![0.0; DESCRIPTOR_DIM];

    let weight = 1.0 / (RESIZE * RESIZE) as f64;
    for px in rgb.chunks_exact(3) {
        for (ch, &v) in px.iter().enumerate() {
            let bin = ((v * COLOR_BINS as f64) as usize).min(COLOR_BINS - 1);
            raw[ch * COLOR_BINS + bin] += weight;
        }
    }

    let luma: Vec<f64> = rgb.chunks_exact(3).map(luminance).collect();
    let at = |y: usize, x: usize| luma[y * RESIZE + x];
    for y in 0..RESIZE {
        for x in 0..RESIZE {
            // Central differences with replicated borders.
            let gx = (at(y, (x + 1).min(RESIZE - 1)) - at(y, x.saturating_sub(1))) / 2.0;
            let gy = (at((y + 1).min(RESIZE - 1), x) - at(y.saturating_sub(1), x)) / 2.0;
            let magnitude = gx.hypot(gy);
            if magnitude == 0.0 {
                continue;
            }
            let angle = gy.atan2(gx);
            let bin = ((angle + std::f64::consts::PI) / (2.0 * std::f64::consts::PI)
                * ORIENT_BINS as f64) as usize;
            let bin = bin.min(ORIENT_BINS - 1);
            let cell = (y / (RESIZE / CELLS)) * CELLS + x / (RESIZE / CELLS);
            raw[COLOR_DIMS + cell * ORIENT_BINS + bin] += magnitude;
        }
    }
    Ok(Descriptor::from_raw(raw))
}

/// Alternate backend: resize the crop to the model's input size, encode it,
/// mean-pool the latent over the grid, and L2-normalize.
pub fn embed_with_encoder(model: &CodecModel, crop: &RgbImage) -> Result<Descriptor> {
    if crop.width == 0 || crop.height == 0 {
        return Err(Error::Usage("cannot embed an empty crop".into()));
    }
    let (h, w) = (model.arch.frame_height, model.arch.frame_width);
    let rgb = resize_bilinear(crop, w, h);
    let input = Tensor::from_fn(&[model.arch.frame_channels, h, w], |i| {
        let (c, p) = (i / (h * w), i % (h * w));
        rgb[3 * p + c]
    });
    let z_e = model.encode(&input)?;
    let spatial: usize = z_e.shape()[1..].iter().product();
    let pooled: Vec<f64> = (0..z_e.shape()[0])
        .map(|j| z_e.data()[j * spatial..(j + 1) * spatial].iter().sum::<f64>() / spatial as f64)
        .collect();
    Ok(Descriptor::from_raw(pooled))
}

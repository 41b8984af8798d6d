//! RGB images, entity-id masks, PNG round trips, and resampling.
//!
//! Frames are 8-bit RGB PNGs; masks are 8-bit palette-indexed PNGs whose
//! palette index *is* the entity id, so masks stay both machine-exact and
//! human-viewable. Encoding settings are fixed, making PNG bytes a pure
//! function of pixel content.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Row-major 8-bit RGB image.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    /// `3 * width * height` bytes, R G B per pixel.
    pub data: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize) -> RgbImage {
        RgbImage { width, height, data: vec![0; 3 * width * height] }
    }

    pub fn from_raw(width: usize, height: usize, data: Vec<u8>) -> Result<RgbImage> {
        if data.len() != 3 * width * height {
            return Err(Error::Config(format!(
                "rgb buffer length {} does not match {width}×{height}",
                data.len()
            )));
        }
        Ok(RgbImage { width, height, data })
    }

    #[inline]
    pub fn pixel(&self, row: usize, col: usize) -> [u8; 3] {
        let i = 3 * (row * self.width + col);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, row: usize, col: usize, rgb: [u8; 3]) {
        let i = 3 * (row * self.width + col);
        self.data[i..i + 3].copy_from_slice(&rgb);
    }
}

/// Row-major 8-bit entity-id mask.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdMask {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl IdMask {
    pub fn new(width: usize, height: usize) -> IdMask {
        IdMask { width, height, data: vec![0; width * height] }
    }

    #[inline]
    pub fn id(&self, row: usize, col: usize) -> u8 {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set_id(&mut self, row: usize, col: usize, id: u8) {
        self.data[row * self.width + col] = id;
    }
}

// ---------------------------------------------------------------------------
// PNG round trips
// ---------------------------------------------------------------------------

pub fn write_rgb_png(path: &Path, img: &RgbImage) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), img.width as u32, img.height as u32);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    let mut writer = enc.write_header().map_err(|e| png_err(path, e))?;
    writer.write_image_data(&img.data).map_err(|e| png_err(path, e))?;
    Ok(())
}

pub fn read_rgb_png(path: &Path) -> Result<RgbImage> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let decoder = png::Decoder::new(std::io::BufReader::new(file));
    let mut reader = decoder.read_info().map_err(|e| png_err(path, e))?;
    let mut buf = vec![0; reader.output_buffer_size().unwrap_or(0)];
    let info = reader.next_frame(&mut buf).map_err(|e| png_err(path, e))?;
    if info.color_type != png::ColorType::Rgb || info.bit_depth != png::BitDepth::Eight {
        return Err(Error::Format(format!(
            "{}: expected 8-bit RGB, got {:?}/{:?}",
            path.display(),
            info.color_type,
            info.bit_depth
        )));
    }
    buf.truncate(info.buffer_size());
    RgbImage::from_raw(info.width as usize, info.height as usize, buf)
}

/// Writes a mask as a palette-indexed PNG; `palette[id]` gives the display
/// color for entity `id`. Indices must be below the palette length.
pub fn write_indexed_png(path: &Path, mask: &IdMask, palette: &[[u8; 3]]) -> Result<()> {
    debug_assert!(mask.data.iter().all(|&id| (id as usize) < palette.len()));
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), mask.width as u32, mask.height as u32);
    enc.set_color(png::ColorType::Indexed);
    enc.set_depth(png::BitDepth::Eight);
    let flat: Vec<u8> = palette.iter().flatten().copied().collect();
    enc.set_palette(flat);
    let mut writer = enc.write_header().map_err(|e| png_err(path, e))?;
    writer.write_image_data(&mask.data).map_err(|e| png_err(path, e))?;
    Ok(())
}

pub fn read_indexed_png(path: &Path) -> Result<IdMask> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut decoder = png::Decoder::new(std::io::BufReader::new(file));
    // Keep palette indices as raw ids instead of expanding to RGB.
    decoder.set_transformations(png::Transformations::IDENTITY);
    let mut reader = decoder.read_info().map_err(|e| png_err(path, e))?;
    let mut buf = vec![0; reader.output_buffer_size().unwrap_or(0)];
    let info = reader.next_frame(&mut buf).map_err(|e| png_err(path, e))?;
    if info.color_type != png::ColorType::Indexed || info.bit_depth != png::BitDepth::Eight {
        return Err(Error::Format(format!(
            "{}: expected 8-bit indexed PNG, got {:?}/{:?}",
            path.display(),
            info.color_type,
            info.bit_depth
        )));
    }
    buf.truncate(info.buffer_size());
    Ok(IdMask { width: info.width as usize, height: info.height as usize, data: buf })
}

fn png_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Format(format!("{}: {e}", path.display()))
}

// ---------------------------------------------------------------------------
// Conversions and resampling
// ---------------------------------------------------------------------------

/// Image → 3×H×W tensor with values in [0, 1].
pub fn frame_to_tensor(img: &RgbImage) -> Tensor {
    let (w, h) = (img.width, img.height);
    let mut data = vec![0.0; 3 * w * h];
    for row in 0..h {
        for col in 0..w {
            let px = img.pixel(row, col);
            for ch in 0..3 {
                data[(ch * h + row) * w + col] = px[ch] as f64 / 255.0;
            }
        }
    }
    Tensor::from_vec(&[3, h, w], data).expect("sized above")
}

/// 3×H×W tensor → image; values clamped to [0, 1] and rounded to bytes.
/// Clamping happens here, at the rendering boundary only.
pub fn tensor_to_frame(t: &Tensor) -> Result<RgbImage> {
    let s = t.shape();
    if s.len() != 3 || s[0] != 3 {
        return Err(Error::Config(format!("frame tensor must be 3×H×W, got {s:?}")));
    }
    let (h, w) = (s[1], s[2]);
    let mut img = RgbImage::new(w, h);
    for row in 0..h {
        for col in 0..w {
            let mut px = [0u8; 3];
            for ch in 0..3 {
                let v = t.data()[(ch * h + row) * w + col].clamp(0.0, 1.0);
                px[ch] = (v * 255.0).round() as u8;
            }
            img.set_pixel(row, col, px);
        }
    }
    Ok(img)
}

/// Bilinear resize to `out_w`×`out_h`, returning per-pixel RGB in [0, 1]
/// (row-major, 3 floats per pixel). Uses pixel-center alignment, so a
/// same-size "resize" is the identity.
pub fn resize_bilinear(img: &RgbImage, out_w: usize, out_h: usize) -> Vec<f64> {
    assert!(out_w > 0 && out_h > 0);
    let (w, h) = (img.width as f64, img.height as f64);
    let sx = w / out_w as f64;
    let sy = h / out_h as f64;
    let mut out = vec![0.0; 3 * out_w * out_h];
    for oy in 0..out_h {
        // Source coordinate of this output pixel's center.
        let fy = ((oy as f64 + 0.5) * sy - 0.5).clamp(0.0, h - 1.0);
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(img.height - 1);
        let ty = fy - y0 as f64;
        for ox in 0..out_w {
            let fx = ((ox as f64 + 0.5) * sx - 0.5).clamp(0.0, w - 1.0);
            let x0 = fx.floor() as usize;
            let x1 = (x0 + 1).min(img.width - 1);
            let tx = fx - x0 as f64;
            let (p00, p01) = (img.pixel(y0, x0), img.pixel(y0, x1));
            let (p10, p11) = (img.pixel(y1, x0), img.pixel(y1, x1));
            for ch in 0..3 {
                let top = p00[ch] as f64 * (1.0 - tx) + p01[ch] as f64 * tx;
                let bot = p10[ch] as f64 * (1.0 - tx) + p11[ch] as f64 * tx;
                out[3 * (oy * out_w + ox) + ch] = (top * (1.0 - ty) + bot * ty) / 255.0;
            }
        }
    }
    out
}

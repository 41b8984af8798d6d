//! Minimal raster plotting: bar charts, scatter plots, matrix heatmaps, and
//! heatmap-over-frame overlays. No text — every plotted series is also
//! emitted as CSV, so the images are quick-look companions, not the record.

use crate::error::{Error, Result};
use crate::image::RgbImage;
use crate::saliency::Heatmap;

/// Five-anchor approximation of the viridis colormap.
pub fn viridis(t: f64) -> [u8; 3] {
    const ANCHORS: [[f64; 3]; 5] = [
        [68.0, 1.0, 84.0],
        [59.0, 82.0, 139.0],
        [33.0, 145.0, 140.0],
        [94.0, 201.0, 98.0],
        [253.0, 231.0, 37.0],
    ];
    let t = t.clamp(0.0, 1.0) * (ANCHORS.len() - 1) as f64;
    let i = (t.floor() as usize).min(ANCHORS.len() - 2);
    let f = t - i as f64;
    let mut rgb = [0u8; 3];
    for ch in 0..3 {
        rgb[ch] = (ANCHORS[i][ch] + f * (ANCHORS[i + 1][ch] - ANCHORS[i][ch])).round() as u8;
    }
    rgb
}

/// The fixed 256-entry lookup table used for overlays.
pub fn colormap256() -> [[u8; 3]; 256] {
    let mut table = [[0u8; 3]; 256];
    for (i, entry) in table.iter_mut().enumerate() {
        *entry = viridis(i as f64 / 255.0);
    }
    table
}

/// Blends the colormapped heatmap over the frame:
/// out = round((1−alpha)·frame + alpha·colormap(value)).
pub fn overlay(frame: &RgbImage, heatmap: &Heatmap, alpha: f64) -> Result<RgbImage> {
    if heatmap.width != frame.width || heatmap.height != frame.height {
        return Err(Error::Config(format!(
            "heatmap is {}×{} but frame is {}×{}",
            heatmap.width, heatmap.height, frame.width, frame.height
        )));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Config(format!("overlay alpha {alpha} must be in [0, 1]")));
    }
    let table = colormap256();
    let mut out = RgbImage::new(frame.width, frame.height);
    for r in 0..frame.height {
        for c in 0..frame.width {
            let v = heatmap.values[r * heatmap.width + c].clamp(0.0, 1.0);
            let heat = table[(v * 255.0).round() as usize];
            let base = frame.pixel(r, c);
            let mut px = [0u8; 3];
            for ch in 0..3 {
                px[ch] = ((1.0 - alpha) * base[ch] as f64 + alpha * heat[ch] as f64).round() as u8;
            }
            out.set_pixel(r, c, px);
        }
    }
    Ok(out)
}

const BACKGROUND: [u8; 3] = [255, 255, 255];
const BAR_COLOR: [u8; 3] = [70, 110, 180];
const BASELINE_COLOR: [u8; 3] = [200, 60, 40];
const MARGIN: usize = 10;

/// Ten visually distinct categorical colors, cycled by label.
pub fn category_color(label: usize) -> [u8; 3] {
    const PALETTE: [[u8; 3]; 10] = [
        [31, 119, 180],
        [255, 127, 14],
        [44, 160, 44],
        [214, 39, 40],
        [148, 103, 189],
        [140, 86, 75],
        [227, 119, 194],
        [127, 127, 127],
        [188, 189, 34],
        [23, 190, 207],
    ];
    PALETTE[label % PALETTE.len()]
}

fn blank(width: usize, height: usize) -> RgbImage {
    let mut img = RgbImage::new(width, height);
    for r in 0..height {
        for c in 0..width {
            img.set_pixel(r, c, BACKGROUND);
        }
    }
    img
}

/// Vertical bars over a zero line, with an optional horizontal reference
/// line (the consistency plot draws the random baseline with it).
pub fn bar_chart(values: &[f64], reference: Option<f64>, width: usize, height: usize) -> RgbImage {
    let mut img = blank(width, height);
    if values.is_empty() || width <= 2 * MARGIN || height <= 2 * MARGIN {
        return img;
    }
    let plot_w = width - 2 * MARGIN;
    let plot_h = height - 2 * MARGIN;
    let mut lo = 0.0f64;
    let mut hi = 0.0f64;
    for &v in values.iter().chain(reference.iter()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if hi - lo <= 0.0 {
        hi = lo + 1.0;
    }
    // Row for a data value; higher values map to smaller rows.
    let row_of = |v: f64| MARGIN + ((hi - v) / (hi - lo) * (plot_h - 1) as f64).round() as usize;

    let zero_row = row_of(0.0);
    let bar_w = (plot_w / values.len()).max(1);
    for (i, &v) in values.iter().enumerate() {
        let c0 = MARGIN + i * bar_w;
        if c0 >= width - MARGIN {
            break;
        }
        let c1 = (c0 + bar_w.saturating_sub(1)).min(width - MARGIN - 1);
        let r = row_of(v);
        let (top, bottom) = if r <= zero_row { (r, zero_row) } else { (zero_row, r) };
        for row in top..=bottom {
            for col in c0..=c1 {
                img.set_pixel(row, col, BAR_COLOR);
            }
        }
    }
    if let Some(v) = reference {
        let row = row_of(v);
        for col in MARGIN..width - MARGIN {
            img.set_pixel(row, col, BASELINE_COLOR);
        }
    }
    img
}

/// 2-D scatter with per-label categorical colors; coordinates are fitted to
/// the plot area with a 5% pad.
pub fn scatter_plot(points: &[[f64; 2]], labels: &[usize], width: usize, height: usize) -> RgbImage {
    let mut img = blank(width, height);
    if points.is_empty() || width <= 2 * MARGIN || height <= 2 * MARGIN {
        return img;
    }
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for p in points {
        x0 = x0.min(p[0]);
        x1 = x1.max(p[0]);
        y0 = y0.min(p[1]);
        y1 = y1.max(p[1]);
    }
    let pad = |lo: &mut f64, hi: &mut f64| {
        let span = (*hi - *lo).max(1e-12);
        *lo -= 0.05 * span;
        *hi += 0.05 * span;
    };
    pad(&mut x0, &mut x1);
    pad(&mut y0, &mut y1);
    let plot_w = (width - 2 * MARGIN - 1) as f64;
    let plot_h = (height - 2 * MARGIN - 1) as f64;
    for (i, p) in points.iter().enumerate() {
        let col = MARGIN + ((p[0] - x0) / (x1 - x0) * plot_w).round() as usize;
        // Flip so larger y plots higher.
        let row = MARGIN + ((y1 - p[1]) / (y1 - y0) * plot_h).round() as usize;
        let color = category_color(labels.get(i).copied().unwrap_or(0));
        for dr in -1i64..=1 {
            for dc in -1i64..=1 {
                let r = row as i64 + dr;
                let c = col as i64 + dc;
                if r >= 0 && c >= 0 && (r as usize) < height && (c as usize) < width {
                    img.set_pixel(r as usize, c as usize, color);
                }
            }
        }
    }
    img
}

/// K×K matrix rendered as colormapped cells of `cell` pixels each,
/// normalized by the matrix maximum.
pub fn matrix_heatmap(values: &[f64], k: usize, cell: usize) -> RgbImage {
    let cell = cell.max(1);
    let side = (k * cell).max(1);
    let mut img = blank(side, side);
    if k == 0 {
        return img;
    }
    debug_assert_eq!(values.len(), k * k);
    let max = values.iter().cloned().fold(0.0, f64::max);
    for i in 0..k {
        for j in 0..k {
            let t = if max > 0.0 { values[i * k + j] / max } else { 0.0 };
            let color = viridis(t);
            for r in i * cell..(i + 1) * cell {
                for c in j * cell..(j + 1) * cell {
                    img.set_pixel(r, c, color);
                }
            }
        }
    }
    img
}

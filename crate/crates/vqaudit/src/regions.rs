//! From heatmap to crops: threshold, split into connected components, drop
//! small blobs, and cut pixel-exact sub-images for embedding.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::embed::Descriptor;
use crate::error::{Error, Result};
use crate::image::{IdMask, RgbImage};
use crate::saliency::Heatmap;

/// Heatmap activation level at or above which a pixel is "on".
pub const DEFAULT_ACT_THRESHOLD: f64 = 0.5;
/// Smallest component area kept (≈ one 3×3 blob at 64×64).
pub const DEFAULT_AREA_THRESHOLD: usize = 9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Connectivity {
    Four,
    #[default]
    Eight,
}

/// Row-major boolean pixel mask.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryMask {
    pub height: usize,
    pub width: usize,
    pub data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(height: usize, width: usize) -> BinaryMask {
        BinaryMask { height, width, data: vec![false; height * width] }
    }

    #[inline]
    pub fn on(&self, row: usize, col: usize) -> bool {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.data[row * self.width + col] = value;
    }

    pub fn count_on(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }
}

/// Inclusive pixel bounding box.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BBox {
    pub row_min: usize,
    pub col_min: usize,
    pub row_max: usize,
    pub col_max: usize,
}

impl BBox {
    pub fn height(&self) -> usize {
        self.row_max - self.row_min + 1
    }

    pub fn width(&self) -> usize {
        self.col_max - self.col_min + 1
    }
}

/// One maximal connected blob of thresholded activation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ActivationComponent {
    /// Member pixels as (row, col), sorted row-major.
    pub pixels: Vec<(usize, usize)>,
    pub area: usize,
    pub bbox: BBox,
}

/// A cropped region of one observation, tagged with the code whose heatmap
/// produced it. The descriptor slot is filled by the embedding stage.
#[derive(Clone, Debug, PartialEq)]
pub struct CropRecord {
    pub code: usize,
    pub episode: u64,
    pub step: u64,
    pub bbox: BBox,
    pub image: RgbImage,
    pub mask: IdMask,
    pub descriptor: Option<Descriptor>,
}

/// Marks every pixel with activation ≥ `tau` as on.
pub fn threshold_mask(heatmap: &Heatmap, tau: f64) -> BinaryMask {
    let mut mask = BinaryMask::new(heatmap.height, heatmap.width);
    for (b, &v) in mask.data.iter_mut().zip(&heatmap.values) {
        *b = v >= tau;
    }
    mask
}

/// Splits a mask's on-pixels into maximal connected components, ordered by
/// their bounding boxes' (row_min, col_min); components sharing a corner keep
/// row-major discovery order.
pub fn connected_components(mask: &BinaryMask, connectivity: Connectivity) -> Vec<ActivationComponent> {
    let neighbors: &[(isize, isize)] = match connectivity {
        Connectivity::Four => &[(-1, 0), (1, 0), (0, -1), (0, 1)],
        Connectivity::Eight => {
            &[(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)]
        }
    };
    let mut visited = vec![false; mask.data.len()];
    let mut components = Vec::new();
    for start in 0..mask.data.len() {
        if !mask.data[start] || visited[start] {
            continue;
        }
        let mut pixels = Vec::new();
        let mut queue = VecDeque::new();
        visited[start] = true;
        queue.push_back(start);
        while let Some(p) = queue.pop_front() {
            let (r, c) = (p / mask.width, p % mask.width);
            pixels.push((r, c));
            for &(dr, dc) in neighbors {
                let (nr, nc) = (r as isize + dr, c as isize + dc);
                if nr < 0 || nc < 0 || nr >= mask.height as isize || nc >= mask.width as isize {
                    continue;
                }
                let q = nr as usize * mask.width + nc as usize;
                if mask.data[q] && !visited[q] {
                    visited[q] = true;
                    queue.push_back(q);
                }
            }
        }
        pixels.sort_unstable();
        let bbox = BBox {
            row_min: pixels.iter().map(|p| p.0).min().unwrap(),
            col_min: pixels.iter().map(|p| p.1).min().unwrap(),
            row_max: pixels.iter().map(|p| p.0).max().unwrap(),
            col_max: pixels.iter().map(|p| p.1).max().unwrap(),
        };
        let area = pixels.len();
        components.push(ActivationComponent { pixels, area, bbox });
    }
    components.sort_by_key(|c| (c.bbox.row_min, c.bbox.col_min));
    components
}

/// Keeps components whose area is at least `tau_area`.
pub fn filter_by_area(
    components: Vec<ActivationComponent>,
    tau_area: usize,
) -> Vec<ActivationComponent> {
    components.into_iter().filter(|c| c.area >= tau_area).collect()
}

/// Cuts the pixel-exact sub-image and sub-mask at the component's bounding
/// box, recording which code and observation it came from.
pub fn crop(
    frame: &RgbImage,
    mask: &IdMask,
    component: &ActivationComponent,
    source: (u64, u64),
    code: usize,
) -> Result<CropRecord> {
    if frame.width != mask.width || frame.height != mask.height {
        return Err(Error::Config(format!(
            "frame is {}×{} but mask is {}×{}",
            frame.width, frame.height, mask.width, mask.height
        )));
    }
    let b = component.bbox;
    if b.row_max >= frame.height || b.col_max >= frame.width {
        return Err(Error::Usage(format!(
            "bounding box rows {}..={} cols {}..={} exceeds the {}×{} frame",
            b.row_min, b.row_max, b.col_min, b.col_max, frame.width, frame.height
        )));
    }
    let mut image = RgbImage::new(b.width(), b.height());
    let mut ids = IdMask::new(b.width(), b.height());
    for r in 0..b.height() {
        for c in 0..b.width() {
            image.set_pixel(r, c, frame.pixel(b.row_min + r, b.col_min + c));
            ids.set_id(r, c, mask.id(b.row_min + r, b.col_min + c));
        }
    }
    Ok(CropRecord {
        code,
        episode: source.0,
        step: source.1,
        bbox: b,
        image,
        mask: ids,
        descriptor: None,
    })
}

//! Frame + mask rendering.

use crate::error::{Error, Result};
use crate::image::{IdMask, RgbImage};

use super::sprites::{self, digit_id};
use super::{tile, Observation, TileGrid, HUD_SLOTS, TILE};

/// Renders a world state to a frame and its entity-id mask.
///
/// The image is `cols·8` wide and `(rows+1)·8` tall: the world grid on top,
/// one HUD strip of digit glyphs at the bottom. The agent (if any) overdraws
/// its cell completely — the sprite is fully opaque — so its mask region is
/// the whole cell. HUD cells carry the digit's entity id at every pixel.
pub fn render(grid: &TileGrid, agent: Option<(usize, usize)>, hud: &[u8; HUD_SLOTS]) -> Result<Observation> {
    if grid.cols != HUD_SLOTS {
        return Err(Error::Config(format!(
            "HUD strip needs {HUD_SLOTS} columns, grid has {}",
            grid.cols
        )));
    }
    if let Some((r, c)) = agent {
        if r >= grid.rows || c >= grid.cols {
            return Err(Error::Config(format!(
                "agent position ({r}, {c}) outside {}×{} grid",
                grid.rows, grid.cols
            )));
        }
    }
    if let Some(&bad) = hud.iter().find(|&&v| v > 9) {
        return Err(Error::Config(format!("HUD count {bad} exceeds 9")));
    }

    let width = grid.cols * TILE;
    let height = (grid.rows + 1) * TILE;
    let mut frame = RgbImage::new(width, height);
    let mut mask = IdMask::new(width, height);

    for row in 0..grid.rows {
        for col in 0..grid.cols {
            let id = if agent == Some((row, col)) {
                tile::AGENT
            } else {
                TileGrid::appearance(grid.get(row, col))
            };
            blit(&mut frame, &mut mask, row, col, id);
        }
    }
    for (slot, &count) in hud.iter().enumerate() {
        blit(&mut frame, &mut mask, grid.rows, slot, digit_id(count));
    }

    Ok(Observation { frame, mask, hud: *hud, agent })
}

/// Copies sprite `id` into tile cell (`cell_row`, `cell_col`) of both planes.
fn blit(frame: &mut RgbImage, mask: &mut IdMask, cell_row: usize, cell_col: usize, id: u8) {
    let sprite = sprites::sprite(id);
    let (y0, x0) = (cell_row * TILE, cell_col * TILE);
    for (dy, row) in sprite.iter().enumerate() {
        for (dx, &px) in row.iter().enumerate() {
            frame.set_pixel(y0 + dy, x0 + dx, px);
            mask.set_id(y0 + dy, x0 + dx, id);
        }
    }
}

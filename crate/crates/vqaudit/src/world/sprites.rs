//! The 8×8 sprite table: 7 world entities + 10 HUD digit glyphs.
//!
//! Sprites are defined as character art and expanded once at first use.
//! Two properties matter beyond looks, and both are covered by tests:
//! all 17 sprites are pairwise distinct, and they are linearly independent
//! as 192-dimensional RGB vectors (the hand-built oracle codec solves a
//! linear system against this table, which requires independence).
//!
//! The agent sprite is fully opaque: an occupied cell looks the same no
//! matter what terrain it covers, so cell appearance is always exactly one
//! sprite from this table.

use std::sync::OnceLock;

use super::tile;
use super::TILE;

/// One sprite: 8×8 RGB pixels.
pub type Sprite = [[[u8; 3]; TILE]; TILE];

struct Art {
    rows: [&'static str; TILE],
    legend: &'static [(char, [u8; 3])],
}

fn expand(art: &Art) -> Sprite {
    let mut out = [[[0u8; 3]; TILE]; TILE];
    for (r, line) in art.rows.iter().enumerate() {
        assert_eq!(line.len(), TILE, "sprite row must be {TILE} chars");
        for (c, ch) in line.chars().enumerate() {
            let color = art
                .legend
                .iter()
                .find(|(k, _)| *k == ch)
                .unwrap_or_else(|| panic!("sprite legend missing {ch:?}"))
                .1;
            out[r][c] = color;
        }
    }
    out
}

const GRASS_BASE: [u8; 3] = [58, 124, 58];
const GRASS_BLADE: [u8; 3] = [82, 152, 72];

const WORLD_ART: [Art; 7] = [
    // grass
    Art {
        rows: [
            "........",
            "..,.....",
            "......,.",
            ".,......",
            "....,...",
            ".......,",
            "..,.....",
            ".....,..",
        ],
        legend: &[('.', GRASS_BASE), (',', GRASS_BLADE)],
    },
    // water
    Art {
        rows: [
            "........",
            ".~~.....",
            "....~~..",
            "~.......",
            "......~~",
            "..~~....",
            "........",
            "....~...",
        ],
        legend: &[('.', [38, 84, 176]), ('~', [96, 140, 220])],
    },
    // stone
    Art {
        rows: [
            "........",
            ".x....x.",
            "........",
            "...xx...",
            ".x......",
            "......x.",
            "..x.....",
            "........",
        ],
        legend: &[('.', [126, 126, 132]), ('x', [92, 92, 98])],
    },
    // tree: canopy and trunk over grass
    Art {
        rows: [
            "..TTTT..",
            ".TTTTTT.",
            "TTTTTTTT",
            "TTTTTTTT",
            ".TTTTTT.",
            "...tt...",
            "...tt...",
            "...tt...",
        ],
        legend: &[('T', [34, 98, 44]), ('t', [104, 72, 42]), ('.', GRASS_BASE)],
    },
    // sand
    Art {
        rows: [
            "........",
            "...o....",
            ".o....o.",
            "........",
            "....o...",
            ".o......",
            "......o.",
            "...o....",
        ],
        legend: &[('.', [214, 196, 136]), ('o', [192, 172, 112])],
    },
    // coal: dark lumps on grey rock
    Art {
        rows: [
            "........",
            "..@@....",
            ".@@@@...",
            "..@@....",
            ".....@@.",
            "....@@@@",
            ".....@@.",
            "........",
        ],
        legend: &[('.', [110, 110, 114]), ('@', [28, 28, 32])],
    },
    // agent: fully opaque figure on a dark backdrop
    Art {
        rows: [
            "DDDHHDDD",
            "DDHSSHDD",
            "DDSSSSDD",
            "DRRRRRRD",
            "DRRRRRRD",
            "DDLLLLDD",
            "DDLDDLDD",
            "DBBDDBBD",
        ],
        legend: &[
            ('D', [24, 24, 28]),
            ('H', [70, 46, 26]),
            ('S', [232, 192, 152]),
            ('R', [204, 58, 48]),
            ('L', [52, 64, 140]),
            ('B', [36, 30, 30]),
        ],
    },
];

/// 5×7 digit bitmaps; each string is one glyph row, top to bottom.
const DIGIT_ROWS: [[&str; 7]; 10] = [
    ["01110", "10001", "10011", "10101", "11001", "10001", "01110"],
    ["00100", "01100", "00100", "00100", "00100", "00100", "01110"],
    ["01110", "10001", "00001", "00010", "00100", "01000", "11111"],
    ["11111", "00010", "00100", "00010", "00001", "10001", "01110"],
    ["00010", "00110", "01010", "10010", "11111", "00010", "00010"],
    ["11111", "10000", "11110", "00001", "00001", "10001", "01110"],
    ["00110", "01000", "10000", "11110", "10001", "10001", "01110"],
    ["11111", "00001", "00010", "00100", "01000", "01000", "01000"],
    ["01110", "10001", "10001", "01110", "10001", "10001", "01110"],
    ["01110", "10001", "10001", "01111", "00001", "00010", "01100"],
];

const DIGIT_INK: [u8; 3] = [240, 240, 240];
const DIGIT_SLATE: [u8; 3] = [44, 44, 52];

fn digit_sprite(value: usize) -> Sprite {
    let mut out = [[DIGIT_SLATE; TILE]; TILE];
    for (r, row) in DIGIT_ROWS[value].iter().enumerate() {
        for (c, bit) in row.chars().enumerate() {
            if bit == '1' {
                // 1px left margin centers the 5-wide glyph; bottom row stays slate.
                out[r][c + 1] = DIGIT_INK;
            }
        }
    }
    out
}

fn table() -> &'static Vec<Sprite> {
    static TABLE: OnceLock<Vec<Sprite>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t: Vec<Sprite> = WORLD_ART.iter().map(expand).collect();
        for d in 0..10 {
            t.push(digit_sprite(d));
        }
        t
    })
}

/// Sprite for entity id 0–16.
pub fn sprite(id: u8) -> &'static Sprite {
    &table()[id as usize]
}

/// Entity id for HUD digit `value` (0–9).
pub fn digit_id(value: u8) -> u8 {
    debug_assert!(value <= 9);
    tile::DIGIT_BASE + value
}

/// Flattens a sprite to 192 floats in [0, 1], channel-major (C×8×8) to match
/// convolution kernel layout.
pub fn sprite_vector(id: u8) -> Vec<f64> {
    let s = sprite(id);
    let mut v = Vec::with_capacity(3 * TILE * TILE);
    for ch in 0..3 {
        for row in s.iter() {
            for px in row.iter() {
                v.push(px[ch] as f64 / 255.0);
            }
        }
    }
    v
}

/// Display palette for mask PNGs: the sprite's mean color per entity, which
/// makes masks roughly resemble frames in an image viewer.
pub fn mask_palette() -> Vec<[u8; 3]> {
    (0..tile::PALETTE_SIZE as u8)
        .map(|id| {
            let s = sprite(id);
            let mut sum = [0u32; 3];
            for row in s.iter() {
                for px in row.iter() {
                    for ch in 0..3 {
                        sum[ch] += px[ch] as u32;
                    }
                }
            }
            [0, 1, 2].map(|ch| (sum[ch] / (TILE * TILE) as u32) as u8)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_sprites_exist() {
        assert_eq!(table().len(), tile::PALETTE_SIZE);
    }

    #[test]
    fn sprites_are_pairwise_distinct() {
        let n = tile::PALETTE_SIZE as u8;
        for a in 0..n {
            for b in (a + 1)..n {
                assert_ne!(sprite(a), sprite(b), "sprites {a} and {b} collide");
            }
        }
    }

    #[test]
    fn sprite_vectors_are_linearly_independent() {
        // Gram matrix of the 17 sprite vectors must be nonsingular; run a
        // pivoted elimination and check every pivot is comfortably nonzero.
        let n = tile::PALETTE_SIZE;
        let vecs: Vec<Vec<f64>> = (0..n as u8).map(sprite_vector).collect();
        let mut g = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                g[i][j] = vecs[i].iter().zip(&vecs[j]).map(|(a, b)| a * b).sum();
            }
        }
        for col in 0..n {
            let (pivot_row, pivot) = (col..n)
                .map(|r| (r, g[r][col].abs()))
                .max_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap();
            assert!(pivot > 1e-9, "rank deficiency at column {col}");
            g.swap(col, pivot_row);
            let p = g[col][col];
            for r in (col + 1)..n {
                let f = g[r][col] / p;
                for c in col..n {
                    g[r][c] -= f * g[col][c];
                }
            }
        }
    }

    #[test]
    fn digit_ids_map_into_palette() {
        assert_eq!(digit_id(0), 7);
        assert_eq!(digit_id(9), 16);
    }

    #[test]
    fn sprite_vector_is_channel_major() {
        let v = sprite_vector(tile::GRASS);
        assert_eq!(v.len(), 192);
        let s = sprite(tile::GRASS);
        // red channel of pixel (2, 5) sits at offset 2*8 + 5
        assert_eq!(v[2 * 8 + 5], s[2][5][0] as f64 / 255.0);
        // green channel plane starts at 64
        assert_eq!(v[64 + 2 * 8 + 5], s[2][5][1] as f64 / 255.0);
    }

    #[test]
    fn mask_palette_covers_all_ids() {
        assert_eq!(mask_palette().len(), tile::PALETTE_SIZE);
    }
}

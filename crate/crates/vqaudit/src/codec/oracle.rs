//! Hand-constructed reference model used to validate the audit pipeline.
//!
//! The tile renderer composes frames from 8×8 sprites on an 8-pixel grid, so
//! a model whose parameters are derived from the sprite table can make every
//! downstream quantity exact:
//!
//! * **Encoder** — one conv with kernel 8, stride 8: each latent cell sees
//!   exactly one sprite. Its kernels are the dual basis of the sprite
//!   vectors (rows of `(S·Sᵀ)⁻¹·S`), so the latent at a cell showing sprite
//!   `i` is the one-hot vector `e_i` up to float rounding.
//! * **Codebook** — `CODE_SCALE · e_i`. Scaling the codes away from the
//!   latents leaves a wide quantization margin (≈0.06 vs ≈2.56 squared
//!   distance) and gives the saliency target a strictly positive gradient on
//!   the assigned coordinate, so heatmaps light up exactly the assigned
//!   cells.
//! * **Decoder** — a 1×1 conv dividing out `CODE_SCALE`, then a transposed
//!   conv whose kernels are the sprites themselves. Reconstruction repaints
//!   the original sprites bit-for-bit after byte rounding.
//!
//! Assignments therefore equal the entity id grid (world tiles, the agent
//! cell, and HUD digit codes), which is what the pipeline checks itself
//! against end to end.

use crate::error::{Error, Result};
use crate::tensor::{Param, ParamSet, Tensor};
use crate::world::sprites::sprite_vector;
use crate::world::{tile, TILE};

use super::{Architecture, CodecModel, LayerSpec, CODEBOOK_PARAM};

/// Codes sit at this multiple of the one-hot latents (see module docs).
pub const CODE_SCALE: f64 = 1.25;

/// Solves `a · x = b` in place (`a` n×n, `b` n×m; `b` becomes `x`) by
/// Gauss-Jordan elimination with partial pivoting.
fn solve_linear(a: &mut [f64], b: &mut [f64], n: usize, m: usize) -> Result<()> {
    debug_assert_eq!(a.len(), n * n);
    debug_assert_eq!(b.len(), n * m);
    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&r1, &r2| a[r1 * n + col].abs().total_cmp(&a[r2 * n + col].abs()))
            .expect("non-empty range");
        if a[pivot_row * n + col].abs() < 1e-9 {
            return Err(Error::Numeric(
                "sprite vectors are linearly dependent; reference encoder is not constructible"
                    .into(),
            ));
        }
        if pivot_row != col {
            for j in 0..n {
                a.swap(pivot_row * n + j, col * n + j);
            }
            for j in 0..m {
                b.swap(pivot_row * m + j, col * m + j);
            }
        }
        let pivot = a[col * n + col];
        for j in 0..n {
            a[col * n + j] /= pivot;
        }
        for j in 0..m {
            b[col * m + j] /= pivot;
        }
        for row in 0..n {
            if row == col {
                continue;
            }
            let factor = a[row * n + col];
            if factor == 0.0 {
                continue;
            }
            for j in 0..n {
                a[row * n + j] -= factor * a[col * n + j];
            }
            for j in 0..m {
                b[row * m + j] -= factor * b[col * m + j];
            }
        }
    }
    Ok(())
}

/// Builds the reference model for a `world_rows × world_cols` tile world
/// (the rendered frame adds one HUD tile row).
pub fn build_oracle_model(world_rows: usize, world_cols: usize) -> Result<CodecModel> {
    let k = tile::PALETTE_SIZE as usize;
    let grid_rows = world_rows + 1;
    let grid_cols = world_cols;
    let n = 3 * TILE * TILE;

    // Sprite matrix S (k × n) and its Gram matrix.
    let mut sprites = vec![0.0; k * n];
    for i in 0..k {
        sprites[i * n..(i + 1) * n].copy_from_slice(&sprite_vector(i as u8));
    }
    let mut gram = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..k {
            gram[i * k + j] = (0..n).map(|t| sprites[i * n + t] * sprites[j * n + t]).sum();
        }
    }
    // Dual basis: rows of (S·Sᵀ)⁻¹·S. ⟨dual_i, sprite_j⟩ = δ_ij.
    let mut dual = sprites.clone();
    solve_linear(&mut gram, &mut dual, k, n)?;

    let arch = Architecture {
        frame_channels: 3,
        frame_height: grid_rows * TILE,
        frame_width: grid_cols * TILE,
        grid_rows,
        grid_cols,
        codebook_size: k,
        embed_dim: k,
        encoder: vec![LayerSpec::Conv {
            in_ch: 3,
            out_ch: k,
            kernel: TILE,
            stride: TILE,
            padding: 0,
        }],
        decoder: vec![
            LayerSpec::Conv { in_ch: k, out_ch: k, kernel: 1, stride: 1, padding: 0 },
            LayerSpec::ConvTranspose {
                in_ch: k,
                out_ch: 3,
                kernel: TILE,
                stride: TILE,
                padding: 0,
            },
        ],
    };
    arch.validate()?;

    let mut encoder = ParamSet::new();
    encoder.push(Param::new("enc0.weight", Tensor::from_vec(&[k, 3, TILE, TILE], dual)?));
    encoder.push(Param::new("enc0.bias", Tensor::zeros(&[k])));

    let mut decoder = ParamSet::new();
    let unscale = Tensor::from_fn(&[k, k, 1, 1], |i| {
        if i / k == i % k {
            1.0 / CODE_SCALE
        } else {
            0.0
        }
    });
    decoder.push(Param::new("dec0.weight", unscale));
    decoder.push(Param::new("dec0.bias", Tensor::zeros(&[k])));
    decoder.push(Param::new("dec1.weight", Tensor::from_vec(&[k, 3, TILE, TILE], sprites)?));
    decoder.push(Param::new("dec1.bias", Tensor::zeros(&[3])));

    let mut codebook = ParamSet::new();
    let codes = Tensor::from_fn(&[k, k], |i| if i / k == i % k { CODE_SCALE } else { 0.0 });
    codebook.push(Param::new(CODEBOOK_PARAM, codes));

    Ok(CodecModel { arch, seed: 0, encoder, decoder, codebook })
}

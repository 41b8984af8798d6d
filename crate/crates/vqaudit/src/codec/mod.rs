//! Vector-quantized convolutional autoencoder.
//!
//! The model maps a frame through a strided conv encoder to a `d`-channel
//! latent grid, snaps every grid vector to its nearest codebook entry, and
//! decodes the snapped grid back to a frame with transposed convs. Layer
//! stacks are described by data ([`Architecture`]) so checkpoints are
//! self-describing and the hand-built reference model in [`oracle`] can reuse
//! the same forward/backward machinery.

pub mod checkpoint;
pub mod oracle;
pub mod train;

use serde::{Deserialize, Serialize};

use crate::conv::{
    conv2d_backward, conv2d_forward, conv2d_transpose_backward, conv2d_transpose_forward,
    relu_backward, relu_forward,
};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{Param, ParamSet, Tensor};

// ---------------------------------------------------------------------------
// Architecture descriptor
// ---------------------------------------------------------------------------

/// One layer of an encoder or decoder stack.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv { in_ch: usize, out_ch: usize, kernel: usize, stride: usize, padding: usize },
    ConvTranspose { in_ch: usize, out_ch: usize, kernel: usize, stride: usize, padding: usize },
    Relu,
}

impl LayerSpec {
    /// `(weight shape, bias length)` for parameterized layers.
    fn param_shapes(&self) -> Option<(Vec<usize>, usize)> {
        match *self {
            LayerSpec::Conv { in_ch, out_ch, kernel, .. } => {
                Some((vec![out_ch, in_ch, kernel, kernel], out_ch))
            }
            LayerSpec::ConvTranspose { in_ch, out_ch, kernel, .. } => {
                Some((vec![in_ch, out_ch, kernel, kernel], out_ch))
            }
            LayerSpec::Relu => None,
        }
    }

    fn fan_in(&self) -> usize {
        match *self {
            LayerSpec::Conv { in_ch, kernel, .. }
            | LayerSpec::ConvTranspose { in_ch, kernel, .. } => in_ch * kernel * kernel,
            LayerSpec::Relu => 0,
        }
    }

    /// Output shape for a `(channels, height, width)` input, checking channel
    /// counts and stride divisibility.
    fn output_shape(&self, input: (usize, usize, usize)) -> Result<(usize, usize, usize)> {
        let (c, h, w) = input;
        let side = |len: usize, k: usize, s: usize, p: usize, axis: &str| -> Result<usize> {
            let span = (len + 2 * p)
                .checked_sub(k)
                .ok_or_else(|| Error::Config(format!("kernel {k} exceeds padded {axis} {len}")))?;
            if span % s != 0 {
                return Err(Error::Config(format!(
                    "stride {s} does not evenly cover {axis} {len} with kernel {k}, padding {p}"
                )));
            }
            Ok(span / s + 1)
        };
        match *self {
            LayerSpec::Conv { in_ch, out_ch, kernel, stride, padding } => {
                if c != in_ch {
                    return Err(Error::Config(format!(
                        "layer expects {in_ch} input channels, got {c}"
                    )));
                }
                Ok((out_ch, side(h, kernel, stride, padding, "height")?, side(w, kernel, stride, padding, "width")?))
            }
            LayerSpec::ConvTranspose { in_ch, out_ch, kernel, stride, padding } => {
                if c != in_ch {
                    return Err(Error::Config(format!(
                        "layer expects {in_ch} input channels, got {c}"
                    )));
                }
                let grow = |len: usize| (len - 1) * stride + kernel - 2 * padding;
                Ok((out_ch, grow(h), grow(w)))
            }
            LayerSpec::Relu => Ok((c, h, w)),
        }
    }
}

/// Full model shape: frame geometry, latent grid, codebook size, and the two
/// layer stacks. Stored verbatim in checkpoints.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub frame_channels: usize,
    pub frame_height: usize,
    pub frame_width: usize,
    pub grid_rows: usize,
    pub grid_cols: usize,
    pub codebook_size: usize,
    pub embed_dim: usize,
    pub encoder: Vec<LayerSpec>,
    pub decoder: Vec<LayerSpec>,
}

impl Architecture {
    pub fn frame_shape(&self) -> [usize; 3] {
        [self.frame_channels, self.frame_height, self.frame_width]
    }

    pub fn latent_shape(&self) -> [usize; 3] {
        [self.embed_dim, self.grid_rows, self.grid_cols]
    }

    /// Shape after the first `layers` encoder layers (all of them by default).
    pub fn propagate(
        layers: &[LayerSpec],
        input: (usize, usize, usize),
    ) -> Result<(usize, usize, usize)> {
        let mut shape = input;
        for layer in layers {
            shape = layer.output_shape(shape)?;
        }
        Ok(shape)
    }

    /// Checks that the declared stacks actually produce the declared latent
    /// grid and frame shapes.
    pub fn validate(&self) -> Result<()> {
        if self.codebook_size == 0 || self.embed_dim == 0 {
            return Err(Error::Config("codebook size and embedding dimension must be ≥ 1".into()));
        }
        let frame = (self.frame_channels, self.frame_height, self.frame_width);
        let latent = (self.embed_dim, self.grid_rows, self.grid_cols);
        let enc_out = Self::propagate(&self.encoder, frame)?;
        if enc_out != latent {
            return Err(Error::Config(format!(
                "encoder produces {enc_out:?}, architecture declares latent {latent:?}"
            )));
        }
        let dec_out = Self::propagate(&self.decoder, latent)?;
        if dec_out != frame {
            return Err(Error::Config(format!(
                "decoder produces {dec_out:?}, architecture declares frame {frame:?}"
            )));
        }
        Ok(())
    }
}

/// Default geometry: 64×64 RGB frames to an 8×8 latent grid (one cell per
/// 8×8-pixel tile), mirrored by the decoder.
pub fn default_architecture(codebook_size: usize, embed_dim: usize) -> Architecture {
    let conv = |in_ch, out_ch| LayerSpec::Conv { in_ch, out_ch, kernel: 4, stride: 2, padding: 1 };
    let deconv =
        |in_ch, out_ch| LayerSpec::ConvTranspose { in_ch, out_ch, kernel: 4, stride: 2, padding: 1 };
    Architecture {
        frame_channels: 3,
        frame_height: 64,
        frame_width: 64,
        grid_rows: 8,
        grid_cols: 8,
        codebook_size,
        embed_dim,
        encoder: vec![
            conv(3, 32),
            LayerSpec::Relu,
            conv(32, 64),
            LayerSpec::Relu,
            conv(64, embed_dim),
        ],
        decoder: vec![
            deconv(embed_dim, 64),
            LayerSpec::Relu,
            deconv(64, 32),
            LayerSpec::Relu,
            deconv(32, 3),
        ],
    }
}

/// The default layer stacks sized for `width`×`height` frames. The encoder
/// downsamples ×8, so both sides must be positive multiples of 8.
pub fn architecture_for_frames(
    width: usize,
    height: usize,
    codebook_size: usize,
    embed_dim: usize,
) -> Result<Architecture> {
    if width == 0 || height == 0 || width % 8 != 0 || height % 8 != 0 {
        return Err(Error::Config(format!(
            "frame size {width}×{height} is not a multiple of 8; the encoder downsamples ×8"
        )));
    }
    let mut arch = default_architecture(codebook_size, embed_dim);
    arch.frame_width = width;
    arch.frame_height = height;
    arch.grid_cols = width / 8;
    arch.grid_rows = height / 8;
    arch.validate()?;
    Ok(arch)
}

pub const DEFAULT_CODEBOOK_SIZE: usize = 64;
pub const DEFAULT_EMBED_DIM: usize = 16;

// ---------------------------------------------------------------------------
// Layer stacks
// ---------------------------------------------------------------------------

/// Activations recorded during a stack forward pass: `acts[0]` is the input,
/// `acts[i + 1]` the output of layer `i`.
#[derive(Clone, Debug)]
pub struct StackCache {
    pub acts: Vec<Tensor>,
}

impl StackCache {
    pub fn output(&self) -> &Tensor {
        self.acts.last().expect("cache always holds the input")
    }

    pub fn into_output(mut self) -> Tensor {
        self.acts.pop().expect("cache always holds the input")
    }
}

fn weight_name(prefix: &str, index: usize) -> String {
    format!("{prefix}{index}.weight")
}

fn bias_name(prefix: &str, index: usize) -> String {
    format!("{prefix}{index}.bias")
}

fn required<'a>(params: &'a ParamSet, name: &str) -> Result<&'a Param> {
    params
        .get(name)
        .ok_or_else(|| Error::Config(format!("model is missing parameter {name}")))
}

/// Runs `input` through the stack, recording every activation.
pub fn stack_forward(
    layers: &[LayerSpec],
    params: &ParamSet,
    prefix: &str,
    input: &Tensor,
) -> Result<StackCache> {
    let mut acts = Vec::with_capacity(layers.len() + 1);
    acts.push(input.clone());
    for (i, layer) in layers.iter().enumerate() {
        let prev = acts.last().expect("non-empty");
        let next = match layer {
            LayerSpec::Conv { stride, padding, .. } => {
                let w = required(params, &weight_name(prefix, i))?;
                let b = required(params, &bias_name(prefix, i))?;
                conv2d_forward(prev, &w.value, b.value.data(), *stride, *padding)?
            }
            LayerSpec::ConvTranspose { stride, padding, .. } => {
                let w = required(params, &weight_name(prefix, i))?;
                let b = required(params, &bias_name(prefix, i))?;
                conv2d_transpose_forward(prev, &w.value, b.value.data(), *stride, *padding)?
            }
            LayerSpec::Relu => relu_forward(prev),
        };
        acts.push(next);
    }
    Ok(StackCache { acts })
}

/// One layer's backward step: gradient w.r.t. the layer input, plus weight and
/// bias gradients for parameterized layers.
fn layer_backward(
    layer: &LayerSpec,
    weight: Option<&Tensor>,
    input_act: &Tensor,
    grad_out: &Tensor,
) -> Result<(Tensor, Option<(Tensor, Vec<f64>)>)> {
    match layer {
        LayerSpec::Conv { stride, padding, .. } => {
            let w = weight.expect("conv layer has a weight");
            let g = conv2d_backward(grad_out, input_act, w, *stride, *padding)?;
            Ok((g.input, Some((g.kernels, g.bias))))
        }
        LayerSpec::ConvTranspose { stride, padding, .. } => {
            let w = weight.expect("transposed conv layer has a weight");
            let g = conv2d_transpose_backward(grad_out, input_act, w, *stride, *padding)?;
            Ok((g.input, Some((g.kernels, g.bias))))
        }
        LayerSpec::Relu => Ok((relu_backward(grad_out, input_act), None)),
    }
}

/// Backpropagates `grad_out` through the whole stack, accumulating parameter
/// gradients in `params` and returning the gradient w.r.t. the stack input.
pub fn stack_backward(
    layers: &[LayerSpec],
    params: &mut ParamSet,
    prefix: &str,
    cache: &StackCache,
    grad_out: &Tensor,
) -> Result<Tensor> {
    debug_assert_eq!(cache.acts.len(), layers.len() + 1);
    let mut grad = grad_out.clone();
    for (i, layer) in layers.iter().enumerate().rev() {
        let wname = weight_name(prefix, i);
        let weight = params.get(&wname).map(|p| p.value.clone());
        let (grad_in, param_grads) = layer_backward(layer, weight.as_ref(), &cache.acts[i], &grad)?;
        if let Some((gw, gb)) = param_grads {
            params
                .get_mut(&wname)
                .ok_or_else(|| Error::Config(format!("model is missing parameter {wname}")))?
                .grad
                .add_assign(&gw);
            let bias = params
                .get_mut(&bias_name(prefix, i))
                .ok_or_else(|| Error::Config(format!("model is missing parameter {}", bias_name(prefix, i))))?;
            for (dst, src) in bias.grad.data_mut().iter_mut().zip(&gb) {
                *dst += src;
            }
        }
        grad = grad_in;
    }
    Ok(grad)
}

/// Backpropagates `grad_out` from the stack output down to the output of
/// layer `stop − 1` (i.e. `acts[stop]`), leaving parameters untouched.
/// `stop = layers.len()` returns `grad_out` itself.
pub fn stack_backward_to(
    layers: &[LayerSpec],
    params: &ParamSet,
    prefix: &str,
    cache: &StackCache,
    grad_out: &Tensor,
    stop: usize,
) -> Result<Tensor> {
    debug_assert!(stop <= layers.len());
    let mut grad = grad_out.clone();
    for (i, layer) in layers.iter().enumerate().rev() {
        if i < stop {
            break;
        }
        let weight = params.get(&weight_name(prefix, i)).map(|p| &p.value);
        let (grad_in, _) = layer_backward(layer, weight, &cache.acts[i], &grad)?;
        grad = grad_in;
    }
    Ok(grad)
}

// ---------------------------------------------------------------------------
// Quantization
// ---------------------------------------------------------------------------

/// Latent grid before and after snapping to the codebook.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantizedLatent {
    /// Code index per grid cell, row-major.
    pub assignments: Vec<usize>,
    pub grid_rows: usize,
    pub grid_cols: usize,
    /// Encoder output, `[d, rows, cols]`.
    pub z_e: Tensor,
    /// Assigned code vectors in the same layout; each cell is bit-equal to
    /// its codebook row.
    pub z_q: Tensor,
}

impl QuantizedLatent {
    pub fn assignment(&self, row: usize, col: usize) -> usize {
        self.assignments[row * self.grid_cols + col]
    }
}

/// Snaps each latent grid vector to the nearest code by squared distance,
/// breaking ties toward the lowest code index.
pub fn quantize(z_e: &Tensor, codes: &Tensor) -> Result<QuantizedLatent> {
    if z_e.shape().len() != 3 {
        return Err(Error::Config(format!(
            "latent grid must be [depth, rows, cols], got {:?}",
            z_e.shape()
        )));
    }
    if codes.shape().len() != 2 {
        return Err(Error::Config(format!("codebook must be [K, d], got {:?}", codes.shape())));
    }
    let (d, rows, cols) = (z_e.shape()[0], z_e.shape()[1], z_e.shape()[2]);
    let k = codes.shape()[0];
    if codes.shape()[1] != d {
        return Err(Error::Config(format!(
            "latent depth {d} does not match codebook dimension {}",
            codes.shape()[1]
        )));
    }
    z_e.check_finite("z_e")?;
    codes.check_finite("codebook")?;

    let spatial = rows * cols;
    let ze = z_e.data();
    let cb = codes.data();
    let mut assignments = Vec::with_capacity(spatial);
    let mut zq = vec![0.0; d * spatial];
    for p in 0..spatial {
        let mut best = 0usize;
        let mut best_dist = f64::INFINITY;
        for c in 0..k {
            let mut dist = 0.0;
            for j in 0..d {
                let diff = ze[j * spatial + p] - cb[c * d + j];
                dist += diff * diff;
            }
            // Strict comparison keeps the lowest index on exact ties.
            if dist < best_dist {
                best_dist = dist;
                best = c;
            }
        }
        assignments.push(best);
        for j in 0..d {
            zq[j * spatial + p] = cb[best * d + j];
        }
    }
    Ok(QuantizedLatent {
        assignments,
        grid_rows: rows,
        grid_cols: cols,
        z_e: z_e.clone(),
        z_q: Tensor::from_vec(&[d, rows, cols], zq)?,
    })
}

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

/// Encoder, decoder, and codebook with their architecture descriptor.
/// The codebook lives in its own [`ParamSet`] (single `"codebook"` entry of
/// shape `[K, d]`) so the three parameter groups step independently.
#[derive(Clone, Debug)]
pub struct CodecModel {
    pub arch: Architecture,
    /// Seed the parameters were initialized from; recorded in checkpoints.
    pub seed: u64,
    pub encoder: ParamSet,
    pub decoder: ParamSet,
    pub codebook: ParamSet,
}

pub const CODEBOOK_PARAM: &str = "codebook";

fn init_stack(layers: &[LayerSpec], prefix: &str, rng: &mut Rng) -> ParamSet {
    let mut params = ParamSet::new();
    for (i, layer) in layers.iter().enumerate() {
        if let Some((wshape, blen)) = layer.param_shapes() {
            // He initialization: keeps activation variance stable through
            // the ReLU stack.
            let std = (2.0 / layer.fan_in() as f64).sqrt();
            let weight = Tensor::from_fn(&wshape, |_| rng.normal() * std);
            params.push(Param::new(weight_name(prefix, i), weight));
            params.push(Param::new(bias_name(prefix, i), Tensor::zeros(&[blen])));
        }
    }
    params
}

impl CodecModel {
    /// Fresh model with He-initialized conv weights, zero biases, and a
    /// small-scale codebook (N(0, 0.02²)) so early assignments spread over
    /// many codes instead of collapsing onto a few large outliers.
    pub fn init(arch: Architecture, seed: u64) -> Result<CodecModel> {
        arch.validate()?;
        let mut rng = Rng::seed_from_u64(seed);
        let encoder = init_stack(&arch.encoder, "enc", &mut rng);
        let decoder = init_stack(&arch.decoder, "dec", &mut rng);
        let mut codebook = ParamSet::new();
        let codes =
            Tensor::from_fn(&[arch.codebook_size, arch.embed_dim], |_| rng.normal() * 0.02);
        codebook.push(Param::new(CODEBOOK_PARAM, codes));
        Ok(CodecModel { arch, seed, encoder, decoder, codebook })
    }

    /// The `[K, d]` code matrix.
    pub fn codes(&self) -> &Tensor {
        &self.codebook.get(CODEBOOK_PARAM).expect("codebook param always present").value
    }

    pub fn codebook_size(&self) -> usize {
        self.arch.codebook_size
    }

    pub fn encode_cached(&self, frame: &Tensor) -> Result<StackCache> {
        stack_forward(&self.arch.encoder, &self.encoder, "enc", frame)
    }

    pub fn decode_cached(&self, latent: &Tensor) -> Result<StackCache> {
        stack_forward(&self.arch.decoder, &self.decoder, "dec", latent)
    }

    /// Encoder forward pass: frame `[3, H, W]` to latent grid `[d, G, G]`.
    pub fn encode(&self, frame: &Tensor) -> Result<Tensor> {
        Ok(self.encode_cached(frame)?.into_output())
    }

    /// Decoder forward pass. Values are unclamped; clamping to [0,1] happens
    /// only when rendering to pixels.
    pub fn decode(&self, latent: &Tensor) -> Result<Tensor> {
        Ok(self.decode_cached(latent)?.into_output())
    }

    pub fn quantize(&self, z_e: &Tensor) -> Result<QuantizedLatent> {
        quantize(z_e, self.codes())
    }

    /// Full round trip: encode, snap to codes, decode.
    pub fn reconstruct(&self, frame: &Tensor) -> Result<(Tensor, QuantizedLatent)> {
        let latent = self.quantize(&self.encode(frame)?)?;
        let recon = self.decode(&latent.z_q)?;
        Ok((recon, latent))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use proptest::prelude::*;

    fn tiny_arch() -> Architecture {
        // 3×8×8 frame to a 2×2 latent grid: same shape relations as the
        // default, small enough for exhaustive checks.
        Architecture {
            frame_channels: 3,
            frame_height: 8,
            frame_width: 8,
            grid_rows: 2,
            grid_cols: 2,
            codebook_size: 5,
            embed_dim: 4,
            encoder: vec![
                LayerSpec::Conv { in_ch: 3, out_ch: 6, kernel: 4, stride: 2, padding: 1 },
                LayerSpec::Relu,
                LayerSpec::Conv { in_ch: 6, out_ch: 4, kernel: 4, stride: 2, padding: 1 },
            ],
            decoder: vec![
                LayerSpec::ConvTranspose { in_ch: 4, out_ch: 6, kernel: 4, stride: 2, padding: 1 },
                LayerSpec::Relu,
                LayerSpec::ConvTranspose { in_ch: 6, out_ch: 3, kernel: 4, stride: 2, padding: 1 },
            ],
        }
    }

    fn codes_2d(rows: &[[f64; 2]]) -> Tensor {
        Tensor::from_fn(&[rows.len(), 2], |i| rows[i / 2][i % 2])
    }

    fn single_cell(v: &[f64]) -> Tensor {
        Tensor::from_fn(&[v.len(), 1, 1], |i| v[i])
    }

    #[test]
    fn quantize_returns_exact_match_with_zero_distance() {
        let codes = codes_2d(&[[5.0, -1.0], [0.25, 0.75], [3.0, 3.0]]);
        let q = quantize(&single_cell(&[0.25, 0.75]), &codes).unwrap();
        assert_eq!(q.assignments, vec![1]);
        assert_eq!(q.z_q.data(), &[0.25, 0.75]);
    }

    #[test]
    fn quantize_prefers_nearer_code() {
        // (0.9, 0.9): distance 1.62 to the origin code, 2.42 to (2, 2).
        let codes = codes_2d(&[[0.0, 0.0], [2.0, 2.0]]);
        let q = quantize(&single_cell(&[0.9, 0.9]), &codes).unwrap();
        assert_eq!(q.assignments, vec![0]);
    }

    #[test]
    fn quantize_breaks_ties_toward_lowest_index() {
        // (0.5, 0.5) is equidistant from (0,0) and (1,1); duplicates of the
        // winner must not steal the assignment either.
        let codes = codes_2d(&[[1.0, 1.0], [0.0, 0.0], [1.0, 1.0]]);
        let q = quantize(&single_cell(&[0.5, 0.5]), &codes).unwrap();
        assert_eq!(q.assignments, vec![0]);
    }

    #[test]
    fn quantize_rejects_dimension_mismatch() {
        let codes = codes_2d(&[[0.0, 0.0]]);
        let err = quantize(&single_cell(&[1.0, 2.0, 3.0]), &codes).unwrap_err();
        assert!(err.to_string().contains("codebook dimension"), "{err}");
    }

    #[test]
    fn quantize_matches_independent_nearest_neighbor_scan() {
        let mut rng = Rng::seed_from_u64(7);
        for _ in 0..50 {
            let (d, rows, cols, k) = (
                1 + rng.below(5) as usize,
                1 + rng.below(4) as usize,
                1 + rng.below(4) as usize,
                1 + rng.below(8) as usize,
            );
            let z_e = Tensor::from_fn(&[d, rows, cols], |_| rng.normal());
            let codes = Tensor::from_fn(&[k, d], |_| rng.normal());
            let q = quantize(&z_e, &codes).unwrap();
            let spatial = rows * cols;
            for p in 0..spatial {
                // Reference: expanded ‖a − b‖² = ‖a‖² − 2⟨a,b⟩ + ‖b‖², scanned
                // in reverse with ≤ so the lowest index wins ties here too.
                let vec_at = |j: usize| z_e.data()[j * spatial + p];
                let a2: f64 = (0..d).map(|j| vec_at(j) * vec_at(j)).sum();
                let mut best = (usize::MAX, f64::INFINITY);
                for c in (0..k).rev() {
                    let row = &codes.data()[c * d..(c + 1) * d];
                    let b2: f64 = row.iter().map(|x| x * x).sum();
                    let ab: f64 = (0..d).map(|j| vec_at(j) * row[j]).sum();
                    let dist = a2 - 2.0 * ab + b2;
                    if dist <= best.1 {
                        best = (c, dist);
                    }
                }
                assert_eq!(q.assignments[p], best.0, "position {p}");
            }
        }
    }

    proptest! {
        #[test]
        fn quantize_is_idempotent_and_zq_is_bit_equal(
            seed in 0u64..1_000_000,
            d in 1usize..5,
            k in 1usize..8,
        ) {
            let mut rng = Rng::seed_from_u64(seed);
            let z_e = Tensor::from_fn(&[d, 3, 2], |_| rng.normal());
            let codes = Tensor::from_fn(&[k, d], |_| rng.normal());
            let q = quantize(&z_e, &codes).unwrap();
            let spatial = 6;
            for p in 0..spatial {
                let row = &codes.data()[q.assignments[p] * d..(q.assignments[p] + 1) * d];
                for j in 0..d {
                    prop_assert_eq!(
                        q.z_q.data()[j * spatial + p].to_bits(),
                        row[j].to_bits()
                    );
                }
            }
            let again = quantize(&q.z_q, &codes).unwrap();
            prop_assert_eq!(again.assignments, q.assignments);
        }
    }

    #[test]
    fn default_architecture_validates_and_yields_declared_shapes() {
        let arch = default_architecture(DEFAULT_CODEBOOK_SIZE, DEFAULT_EMBED_DIM);
        arch.validate().unwrap();
        assert_eq!(arch.latent_shape(), [16, 8, 8]);
    }

    #[test]
    fn validate_catches_grid_mismatch() {
        let mut arch = default_architecture(8, 16);
        arch.grid_rows = 16;
        let err = arch.validate().unwrap_err();
        assert!(err.to_string().contains("latent"), "{err}");
    }

    #[test]
    fn validate_catches_channel_mismatch() {
        let mut arch = tiny_arch();
        arch.encoder[2] = LayerSpec::Conv { in_ch: 7, out_ch: 4, kernel: 4, stride: 2, padding: 1 };
        assert!(arch.validate().is_err());
    }

    #[test]
    fn encoder_shapes_follow_the_descriptor_layer_by_layer() {
        let arch = tiny_arch();
        let model = CodecModel::init(arch.clone(), 3).unwrap();
        let frame = Tensor::from_fn(&[3, 8, 8], |i| (i as f64).sin());
        let cache = model.encode_cached(&frame).unwrap();
        let mut shape = (3usize, 8usize, 8usize);
        for (i, layer) in arch.encoder.iter().enumerate() {
            shape = layer.output_shape(shape).unwrap();
            assert_eq!(cache.acts[i + 1].shape(), &[shape.0, shape.1, shape.2], "layer {i}");
        }
        assert_eq!(cache.output().shape(), arch.latent_shape());
    }

    #[test]
    fn zero_frame_with_zero_biases_encodes_to_zero() {
        let model = CodecModel::init(tiny_arch(), 11).unwrap();
        let z_e = model.encode(&Tensor::zeros(&[3, 8, 8])).unwrap();
        assert!(z_e.data().iter().all(|&v| v == 0.0));
        let recon = model.decode(&Tensor::zeros(&[4, 2, 2])).unwrap();
        assert_eq!(recon.shape(), &[3, 8, 8]);
        assert!(recon.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn forward_passes_are_deterministic() {
        let model = CodecModel::init(tiny_arch(), 5).unwrap();
        let frame = Tensor::from_fn(&[3, 8, 8], |i| ((i * 37) % 11) as f64 / 11.0);
        let (r1, q1) = model.reconstruct(&frame).unwrap();
        let (r2, q2) = model.reconstruct(&frame).unwrap();
        assert_eq!(r1.data(), r2.data());
        assert_eq!(q1.assignments, q2.assignments);
    }

    #[test]
    fn init_is_seed_deterministic_and_seed_sensitive() {
        let a = CodecModel::init(tiny_arch(), 9).unwrap();
        let b = CodecModel::init(tiny_arch(), 9).unwrap();
        let c = CodecModel::init(tiny_arch(), 10).unwrap();
        for (pa, pb) in a.encoder.iter().zip(b.encoder.iter()) {
            assert_eq!(pa.value.data(), pb.value.data());
        }
        assert_eq!(a.codes().data(), b.codes().data());
        assert_ne!(a.codes().data(), c.codes().data());
    }

    #[test]
    fn stack_backward_to_full_depth_returns_grad_out() {
        let model = CodecModel::init(tiny_arch(), 2).unwrap();
        let frame = Tensor::from_fn(&[3, 8, 8], |i| (i as f64 * 0.01).cos());
        let cache = model.encode_cached(&frame).unwrap();
        let g = Tensor::from_fn(&[4, 2, 2], |i| i as f64);
        let got = stack_backward_to(&model.arch.encoder, &model.encoder, "enc", &cache, &g, 3)
            .unwrap();
        assert_eq!(got.data(), g.data());
    }

    #[test]
    fn stack_backward_to_matches_stack_backward_input_grad() {
        let mut model = CodecModel::init(tiny_arch(), 2).unwrap();
        let frame = Tensor::from_fn(&[3, 8, 8], |i| (i as f64 * 0.03).sin());
        let cache = model.encode_cached(&frame).unwrap();
        let g = Tensor::from_fn(&[4, 2, 2], |i| (i as f64 * 0.5).cos());
        let via_to =
            stack_backward_to(&model.arch.encoder, &model.encoder, "enc", &cache, &g, 0).unwrap();
        let arch = model.arch.clone();
        let via_full =
            stack_backward(&arch.encoder, &mut model.encoder, "enc", &cache, &g).unwrap();
        assert_eq!(via_to.data(), via_full.data());
    }
}

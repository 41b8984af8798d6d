//! Model checkpoint file format.
//!
//! ```text
//! bytes 0..8    magic "VQAUDIT1"
//! bytes 8..12   header length, u32 little-endian
//! header        UTF-8 JSON: architecture, K, d, seed, tensor index, checksum
//! payload       tensors as little-endian f32, in header-declared order
//! ```
//!
//! The tensor index names every parameter with its shape; the checksum is the
//! SHA-256 of the payload and is recomputed on load.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::tensor::{Param, ParamSet, Tensor};

use super::{Architecture, CodecModel, CODEBOOK_PARAM};

const MAGIC: &[u8; 8] = b"VQAUDIT1";

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    architecture: Architecture,
    codebook_size: usize,
    embed_dim: usize,
    seed: u64,
    tensors: Vec<TensorEntry>,
    payload_sha256: String,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Serializes the model (encoder, decoder, codebook — in that order) to
/// `path`. Values are stored as f32.
pub fn save_checkpoint(model: &CodecModel, path: &Path) -> Result<()> {
    let mut entries = Vec::new();
    let mut payload: Vec<u8> = Vec::new();
    for set in [&model.encoder, &model.decoder, &model.codebook] {
        for param in set.iter() {
            entries.push(TensorEntry {
                name: param.name.clone(),
                shape: param.value.shape().to_vec(),
            });
            for &v in param.value.data() {
                payload.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
    }

    let header = CheckpointHeader {
        architecture: model.arch.clone(),
        codebook_size: model.arch.codebook_size,
        embed_dim: model.arch.embed_dim,
        seed: model.seed,
        tensors: entries,
        payload_sha256: hex(&Sha256::digest(&payload)),
    };
    let header_json =
        serde_json::to_vec(&header).map_err(|e| Error::Format(format!("checkpoint header: {e}")))?;

    let mut bytes = Vec::with_capacity(12 + header_json.len() + payload.len());
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&(header_json.len() as u32).to_le_bytes());
    bytes.extend_from_slice(&header_json);
    bytes.extend_from_slice(&payload);
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Loads a checkpoint, verifying magic, header integrity, payload length,
/// checksum, and agreement between the tensor index and the architecture.
pub fn load_checkpoint(path: &Path) -> Result<CodecModel> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let fail = |msg: String| Error::Format(format!("{}: {msg}", path.display()));

    if bytes.len() < 12 {
        return Err(fail("checkpoint truncated before header".into()));
    }
    if &bytes[..8] != MAGIC {
        return Err(fail("not a model checkpoint (magic mismatch)".into()));
    }
    let header_len = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    if bytes.len() < 12 + header_len {
        return Err(fail("checkpoint truncated inside header".into()));
    }
    let header: CheckpointHeader = serde_json::from_slice(&bytes[12..12 + header_len])
        .map_err(|e| fail(format!("invalid header: {e}")))?;
    let payload = &bytes[12 + header_len..];

    let arch = header.architecture;
    if header.codebook_size != arch.codebook_size || header.embed_dim != arch.embed_dim {
        return Err(fail(format!(
            "header K={} d={} disagrees with architecture K={} d={}",
            header.codebook_size, header.embed_dim, arch.codebook_size, arch.embed_dim
        )));
    }
    arch.validate()?;

    let declared: usize = header.tensors.iter().map(|t| t.shape.iter().product::<usize>()).sum();
    if payload.len() != declared * 4 {
        return Err(fail(format!(
            "payload holds {} bytes, tensor index declares {}",
            payload.len(),
            declared * 4
        )));
    }
    let digest = hex(&Sha256::digest(payload));
    if digest != header.payload_sha256 {
        return Err(fail("payload checksum mismatch".into()));
    }

    let mut encoder = ParamSet::new();
    let mut decoder = ParamSet::new();
    let mut codebook = ParamSet::new();
    let mut offset = 0usize;
    for entry in &header.tensors {
        let count: usize = entry.shape.iter().product();
        let mut data = Vec::with_capacity(count);
        for i in 0..count {
            let at = offset + i * 4;
            let v = f32::from_le_bytes(payload[at..at + 4].try_into().expect("4 bytes"));
            data.push(v as f64);
        }
        offset += count * 4;
        let param = Param::new(entry.name.clone(), Tensor::from_vec(&entry.shape, data)?);
        if entry.name == CODEBOOK_PARAM {
            codebook.push(param);
        } else if entry.name.starts_with("enc") {
            encoder.push(param);
        } else if entry.name.starts_with("dec") {
            decoder.push(param);
        } else {
            return Err(fail(format!("unknown tensor {} in index", entry.name)));
        }
    }

    let model = CodecModel { arch, seed: header.seed, encoder, decoder, codebook };
    verify_parameters(&model, path)?;
    Ok(model)
}

/// Checks that every layer's parameters arrived with the right shapes and
/// that the codebook matches the declared K×d.
fn verify_parameters(model: &CodecModel, path: &Path) -> Result<()> {
    let fail = |msg: String| Error::Format(format!("{}: {msg}", path.display()));
    for (layers, set, prefix) in [
        (&model.arch.encoder, &model.encoder, "enc"),
        (&model.arch.decoder, &model.decoder, "dec"),
    ] {
        for (i, layer) in layers.iter().enumerate() {
            let Some((wshape, blen)) = layer.param_shapes() else { continue };
            let wname = format!("{prefix}{i}.weight");
            let bname = format!("{prefix}{i}.bias");
            let w = set.get(&wname).ok_or_else(|| fail(format!("missing tensor {wname}")))?;
            if w.value.shape() != wshape.as_slice() {
                return Err(fail(format!(
                    "{wname} has shape {:?}, architecture requires {wshape:?}",
                    w.value.shape()
                )));
            }
            let b = set.get(&bname).ok_or_else(|| fail(format!("missing tensor {bname}")))?;
            if b.value.shape() != [blen] {
                return Err(fail(format!("{bname} has wrong shape")));
            }
        }
    }
    let codes = model
        .codebook
        .get(CODEBOOK_PARAM)
        .ok_or_else(|| fail("missing codebook tensor".into()))?;
    if codes.value.shape() != [model.arch.codebook_size, model.arch.embed_dim] {
        return Err(fail(format!(
            "codebook has shape {:?}, architecture requires [{}, {}]",
            codes.value.shape(),
            model.arch.codebook_size,
            model.arch.embed_dim
        )));
    }
    codes.value.check_finite("codebook")?;
    Ok(())
}

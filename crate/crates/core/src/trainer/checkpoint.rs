//! Binary checkpoint layout, all integers little-endian:
//!
//! | field        | size                          |
//! |--------------|-------------------------------|
//! | magic `OCRC` | 4                             |
//! | version      | u32                           |
//! | json length  | u32                           |
//! | descriptor   | json length                   |
//! | weights      | 4 * param count (f32)         |
//! | crc32        | u32 over the weight bytes     |

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{ArchDescriptor, LayerSpec, ModelParams};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"OCRC";
const VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Descriptor {
    arch: String,
    input_size: usize,
    input_channels: usize,
    num_classes: usize,
    layers: Vec<LayerSpec>,
    param_count: usize,
    seed: u64,
    #[serde(default)]
    classes: Vec<String>,
}

pub fn encode_checkpoint(params: &ModelParams) -> Result<Vec<u8>> {
    let desc = Descriptor {
        arch: params.arch.name.clone(),
        input_size: params.arch.input_size,
        input_channels: params.arch.input_channels,
        num_classes: params.arch.num_classes,
        layers: params.arch.layers.clone(),
        param_count: params.weights.len(),
        seed: params.seed,
        classes: params.classes.clone(),
    };
    let json = serde_json::to_vec(&desc)?;
    let json_len = u32::try_from(json.len()).map_err(|_| Error::Checkpoint("descriptor too large".into()))?;
    let mut out = Vec::with_capacity(16 + json.len() + params.weights.len() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&json_len.to_le_bytes());
    out.extend_from_slice(&json);
    let payload_start = out.len();
    for w in &params.weights {
        out.extend_from_slice(&w.to_le_bytes());
    }
    let crc = crc32fast::hash(&out[payload_start..]);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

fn take<'a>(bytes: &'a [u8], pos: &mut usize, n: usize, what: &str) -> Result<&'a [u8]> {
    let end = pos
        .checked_add(n)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| Error::Checkpoint(format!("truncated while reading {what}")))?;
    let s = &bytes[*pos..end];
    *pos = end;
    Ok(s)
}

fn read_u32(bytes: &[u8], pos: &mut usize, what: &str) -> Result<u32> {
    Ok(u32::from_le_bytes(take(bytes, pos, 4, what)?.try_into().unwrap()))
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<ModelParams> {
    let mut pos = 0;
    if take(bytes, &mut pos, 4, "magic")? != MAGIC {
        return Err(Error::Checkpoint("bad magic, not a checkpoint file".into()));
    }
    let version = read_u32(bytes, &mut pos, "version")?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let json_len = read_u32(bytes, &mut pos, "descriptor length")? as usize;
    let desc: Descriptor = serde_json::from_slice(take(bytes, &mut pos, json_len, "descriptor")?)
        .map_err(|e| Error::Checkpoint(format!("bad descriptor: {e}")))?;
    let arch = ArchDescriptor::build(&desc.arch, desc.input_size, desc.num_classes)
        .map_err(|e| Error::Checkpoint(format!("descriptor: {e}")))?;
    let declared = ArchDescriptor {
        name: desc.arch.clone(),
        input_size: desc.input_size,
        input_channels: desc.input_channels,
        num_classes: desc.num_classes,
        layers: desc.layers,
    };
    if declared != arch || desc.param_count != arch.param_count() {
        return Err(Error::Checkpoint(format!(
            "descriptor does not match architecture {:?}",
            desc.arch
        )));
    }
    if !desc.classes.is_empty() && desc.classes.len() != desc.num_classes {
        return Err(Error::Checkpoint(
            "class list length differs from num_classes".into(),
        ));
    }
    let payload = take(bytes, &mut pos, desc.param_count * 4, "weights")?;
    let crc = read_u32(bytes, &mut pos, "checksum")?;
    if pos != bytes.len() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - pos)));
    }
    if crc32fast::hash(payload) != crc {
        return Err(Error::Checkpoint("checksum mismatch, weights are corrupt".into()));
    }
    let weights = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let mut params =
        ModelParams::from_weights(arch, desc.seed, weights).map_err(|e| Error::Checkpoint(e.to_string()))?;
    params.classes = desc.classes;
    Ok(params)
}

pub fn save_checkpoint(params: &ModelParams, path: &Path) -> Result<()> {
    let bytes = encode_checkpoint(params)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<ModelParams> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}

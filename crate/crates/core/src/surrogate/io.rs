//! PXSM weight files.
//!
//! Layout: `PXSM` magic, u32 LE version, u64 LE header length, UTF-8 JSON
//! header (config, normalizer, tensor manifest), then every tensor as raw
//! little-endian f64 in manifest order. Manifest offsets are byte offsets
//! from the start of the data section.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{SurrogateConfig, TargetNormalizer};
use super::model::SurrogateModel;
use super::weights::{ModelWeights, Tensor};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"PXSM";
pub const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ManifestEntry {
    name: String,
    shape: Vec<usize>,
    offset: u64,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: SurrogateConfig,
    normalizer: TargetNormalizer,
    tensors: Vec<ManifestEntry>,
}

pub fn encode_weights(model: &SurrogateModel, normalizer: &TargetNormalizer) -> Result<Vec<u8>> {
    let mut offset = 0u64;
    let tensors = model
        .weights
        .tensors
        .iter()
        .map(|t| {
            let e = ManifestEntry {
                name: t.name.clone(),
                shape: t.shape.clone(),
                offset,
            };
            offset += 8 * t.len() as u64;
            e
        })
        .collect();
    let header = serde_json::to_vec(&Header {
        config: model.config().clone(),
        normalizer: *normalizer,
        tensors,
    })?;

    let mut out = Vec::with_capacity(16 + header.len() + offset as usize);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    for t in &model.weights.tensors {
        for v in &t.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

fn take<'a>(bytes: &'a [u8], at: &mut usize, n: usize) -> Result<&'a [u8]> {
    let end = at.checked_add(n).filter(|&e| e <= bytes.len());
    let end = end.ok_or_else(|| Error::Model("weight file is truncated".into()))?;
    let s = &bytes[*at..end];
    *at = end;
    Ok(s)
}

pub fn decode_weights(bytes: &[u8]) -> Result<(SurrogateModel, TargetNormalizer)> {
    let mut at = 0;
    if take(bytes, &mut at, 4)? != MAGIC {
        return Err(Error::Model("not a PXSM weight file (bad magic)".into()));
    }
    let version = u32::from_le_bytes(take(bytes, &mut at, 4)?.try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(Error::Model(format!("unsupported PXSM version {version}")));
    }
    let header_len = u64::from_le_bytes(take(bytes, &mut at, 8)?.try_into().expect("8 bytes"));
    let header_len = usize::try_from(header_len).map_err(|_| Error::Model("header length overflow".into()))?;
    let header: Header = serde_json::from_slice(take(bytes, &mut at, header_len)?)
        .map_err(|e| Error::Model(format!("bad PXSM header: {e}")))?;
    header.normalizer.validate()?;

    let data = &bytes[at..];
    let mut expected_offset = 0u64;
    let mut tensors = Vec::with_capacity(header.tensors.len());
    for entry in header.tensors {
        if entry.offset != expected_offset {
            return Err(Error::Model(format!(
                "tensor `{}` at offset {} (expected {expected_offset})",
                entry.name, entry.offset
            )));
        }
        let len: usize = entry.shape.iter().product();
        let mut pos = entry.offset as usize;
        let raw = take(data, &mut pos, 8 * len)?;
        let values = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        expected_offset += 8 * len as u64;
        tensors.push(Tensor {
            name: entry.name,
            shape: entry.shape,
            data: values,
        });
    }
    if expected_offset as usize != data.len() {
        return Err(Error::Model(format!(
            "{} trailing bytes after tensor data",
            data.len() - expected_offset as usize
        )));
    }
    let model = SurrogateModel::from_parts(header.config, ModelWeights { tensors })?;
    Ok((model, header.normalizer))
}

pub fn save_weights(path: &Path, model: &SurrogateModel, normalizer: &TargetNormalizer) -> Result<()> {
    let bytes = encode_weights(model, normalizer)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_weights(path: &Path) -> Result<(SurrogateModel, TargetNormalizer)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_weights(&bytes)
}

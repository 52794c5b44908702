// SPDX-License-Identifier: Apache-2.0

//! Weight container.
//!
//! ```text
//! offset  size  content
//! 0       8     magic b"IMCWGT\0\x01"
//! 8       4     header length H, u32 little-endian
//! 12      H     UTF-8 JSON header (see `WeightHeader`)
//! 12+H    P     f32 little-endian matrices, row-major, layer by layer
//! ```
//!
//! Each layer matrix has `(inputs + bias) × outputs` entries; the header
//! records the shapes, per-layer scales, the payload length and its SHA-256.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::pipeline::{DnnModel, LayerWeights};

pub const MAGIC: &[u8; 8] = b"IMCWGT\0\x01";
pub const FORMAT: &str = "imcsim-weights";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum WeightError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("not a weight file: bad magic")]
    BadMagic,
    #[error("truncated weight file: expected {expected} bytes, found {actual}")]
    Truncated { expected: usize, actual: usize },
    #[error("bad weight header: {0}")]
    Header(String),
    #[error("weight header/payload mismatch: {0}")]
    Mismatch(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightHeader {
    pub format: String,
    pub version: u32,
    pub endianness: String,
    pub dtype: String,
    pub layer_dims: Vec<usize>,
    pub bias: Vec<bool>,
    pub scales: Vec<f64>,
    /// `[rows, cols]` of each stored matrix, bias row included.
    pub shapes: Vec<[usize; 2]>,
    pub payload_bytes: usize,
    pub payload_sha256: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn encode_weights(model: &DnnModel) -> Result<Vec<u8>, WeightError> {
    model.validate().map_err(WeightError::Mismatch)?;
    let mut payload = Vec::new();
    for layer in &model.layers {
        for w in &layer.weights {
            payload.extend_from_slice(&w.to_le_bytes());
        }
    }
    let header = WeightHeader {
        format: FORMAT.into(),
        version: VERSION,
        endianness: "little".into(),
        dtype: "f32".into(),
        layer_dims: model.layer_dims.clone(),
        bias: model.layers.iter().map(|l| l.bias).collect(),
        scales: model.layers.iter().map(|l| l.scale).collect(),
        shapes: model.layers.iter().map(|l| [l.rows(), l.outputs]).collect(),
        payload_bytes: payload.len(),
        payload_sha256: sha256_hex(&payload),
    };
    let json = serde_json::to_vec(&header).map_err(|e| WeightError::Header(e.to_string()))?;
    let mut out = Vec::with_capacity(12 + json.len() + payload.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&payload);
    Ok(out)
}

pub fn decode_weights(bytes: &[u8]) -> Result<DnnModel, WeightError> {
    if bytes.len() < 12 {
        return Err(WeightError::Truncated {
            expected: 12,
            actual: bytes.len(),
        });
    }
    if &bytes[..8] != MAGIC {
        return Err(WeightError::BadMagic);
    }
    let hlen = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    if bytes.len() < 12 + hlen {
        return Err(WeightError::Truncated {
            expected: 12 + hlen,
            actual: bytes.len(),
        });
    }
    let header: WeightHeader =
        serde_json::from_slice(&bytes[12..12 + hlen]).map_err(|e| WeightError::Header(e.to_string()))?;
    if header.format != FORMAT || header.version != VERSION {
        return Err(WeightError::Header(format!(
            "unsupported format {} v{}",
            header.format, header.version
        )));
    }
    if header.endianness != "little" || header.dtype != "f32" {
        return Err(WeightError::Header(format!(
            "unsupported encoding {} {}",
            header.endianness, header.dtype
        )));
    }
    let layers = header.layer_dims.len().saturating_sub(1);
    if header.bias.len() != layers || header.scales.len() != layers || header.shapes.len() != layers {
        return Err(WeightError::Mismatch(format!(
            "{} layers from dims, but {} bias flags, {} scales, {} shapes",
            layers,
            header.bias.len(),
            header.scales.len(),
            header.shapes.len()
        )));
    }
    let payload = &bytes[12 + hlen..];
    let expected: usize = header.shapes.iter().map(|[r, c]| r * c * 4).sum();
    if header.payload_bytes != expected || payload.len() != expected {
        return Err(WeightError::Mismatch(format!(
            "shapes need {expected} payload bytes, header says {}, file has {}",
            header.payload_bytes,
            payload.len()
        )));
    }
    if sha256_hex(payload) != header.payload_sha256 {
        return Err(WeightError::Mismatch("payload checksum differs from header".into()));
    }

    let mut offset = 0;
    let mut out = Vec::with_capacity(layers);
    for l in 0..layers {
        let (n, m) = (header.layer_dims[l], header.layer_dims[l + 1]);
        let [rows, cols] = header.shapes[l];
        if rows != n + usize::from(header.bias[l]) || cols != m {
            return Err(WeightError::Mismatch(format!(
                "layer {l} stored as {rows}x{cols}, dims imply {}x{m}",
                n + usize::from(header.bias[l])
            )));
        }
        let weights = payload[offset..offset + rows * cols * 4]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        offset += rows * cols * 4;
        out.push(LayerWeights {
            inputs: n,
            outputs: m,
            bias: header.bias[l],
            weights,
            scale: header.scales[l],
        });
    }
    let model = DnnModel {
        layer_dims: header.layer_dims,
        layers: out,
    };
    model.validate().map_err(WeightError::Mismatch)?;
    Ok(model)
}

pub fn save_weights(model: &DnnModel, path: &Path) -> Result<(), WeightError> {
    let bytes = encode_weights(model)?;
    fs::write(path, bytes).map_err(|source| WeightError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_weights(path: &Path) -> Result<DnnModel, WeightError> {
    let bytes = fs::read(path).map_err(|source| WeightError::Io {
        path: path.display().to_string(),
        source,
    })?;
    decode_weights(&bytes)
}

//! `AMDW v1` weight checkpoints.
//!
//! Layout: an 8-byte little-endian header length `n`, then `n` bytes of JSON
//! `{version, config, param_index: [{name, shape, offset}]}`, then the flat
//! payload of 32-bit little-endian floats. `offset` is a byte offset into the
//! payload; tensors are stored row-major in `param_index` order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::params::ModelParams;
use super::Amdet;
use crate::error::{AmdetError, Result};
use crate::tensor::Mat;

pub const CHECKPOINT_VERSION: u64 = 1;
const FORMAT: &str = "AMDW";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: [usize; 2],
    pub offset: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub version: u64,
    pub config: ModelConfig,
    pub param_index: Vec<ParamEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Amdet,
}

impl Checkpoint {
    pub fn to_bytes(model: &Amdet) -> Result<Vec<u8>> {
        let mut offset = 0u64;
        let mut index = Vec::with_capacity(model.params.len());
        for (name, t) in model.params.iter() {
            index.push(ParamEntry {
                name: name.to_string(),
                shape: [t.rows, t.cols],
                offset,
            });
            offset += 4 * t.len() as u64;
        }
        let header = CheckpointHeader {
            version: CHECKPOINT_VERSION,
            config: model.config.clone(),
            param_index: index,
        };
        let json = serde_json::to_vec(&header).map_err(|e| AmdetError::json("<checkpoint header>", e))?;
        let mut out = Vec::with_capacity(8 + json.len() + offset as usize);
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for t in model.params.tensors() {
            for &v in &t.data {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Amdet> {
        let manifest = |field: &str, reason: String| AmdetError::Manifest {
            format: FORMAT,
            field: field.to_string(),
            reason,
        };
        if bytes.len() < 8 {
            return Err(manifest("header_len", format!("file of {} bytes has no header", bytes.len())));
        }
        let header_len = u64::from_le_bytes(bytes[..8].try_into().unwrap()) as usize;
        let header_end = 8usize
            .checked_add(header_len)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| manifest("header_len", format!("{header_len} exceeds file size")))?;
        let header: CheckpointHeader = serde_json::from_slice(&bytes[8..header_end])
            .map_err(|e| AmdetError::json("<checkpoint header>", e))?;
        if header.version != CHECKPOINT_VERSION {
            return Err(AmdetError::Version {
                format: FORMAT,
                found: header.version,
                expected: CHECKPOINT_VERSION,
            });
        }
        header.config.validate()?;
        let payload = &bytes[header_end..];
        let expected: u64 = header
            .param_index
            .iter()
            .map(|e| 4 * (e.shape[0] * e.shape[1]) as u64)
            .sum();
        if payload.len() as u64 != expected {
            return Err(AmdetError::PayloadLength {
                format: FORMAT,
                expected,
                actual: payload.len() as u64,
            });
        }
        let mut names = Vec::new();
        let mut tensors = Vec::new();
        for e in &header.param_index {
            let n = e.shape[0] * e.shape[1];
            let start = e.offset as usize;
            let end = start + 4 * n;
            if end > payload.len() {
                return Err(manifest(
                    &format!("param_index.{}.offset", e.name),
                    format!("{start}..{end} beyond payload of {} bytes", payload.len()),
                ));
            }
            let data: Vec<f64> = payload[start..end]
                .chunks_exact(4)
                .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
                .collect();
            if !data.iter().all(|v| v.is_finite()) {
                return Err(AmdetError::non_finite(format!("checkpoint tensor {}", e.name)));
            }
            names.push(e.name.clone());
            tensors.push(Mat::from_vec(e.shape[0], e.shape[1], data));
        }
        Amdet::from_parts(header.config, ModelParams::from_parts(names, tensors))
    }
}

pub fn write_checkpoint(path: impl AsRef<Path>, model: &Amdet) -> Result<()> {
    let path = path.as_ref();
    let bytes = Checkpoint::to_bytes(model)?;
    fs::write(path, bytes).map_err(|e| AmdetError::io(path, e))
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<Amdet> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| AmdetError::io(path, e))?;
    Checkpoint::from_bytes(&bytes)
}

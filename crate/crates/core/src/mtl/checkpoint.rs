//! Model checkpoint file.
//!
//! Layout: magic `SGMT`, `u32` LE header length, UTF-8 JSON
//! [`CheckpointHeader`], then every tensor listed in the header as
//! little-endian `f64` in header order.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Adapter, MtlParams, TrainConfig, TrainMode};
use crate::error::{Error, Result};
use crate::model::PathologyTask;

const MAGIC: &[u8; 4] = b"SGMT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorInfo {
    pub name: String,
    pub len: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub version: u32,
    pub mode: TrainMode,
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub bottleneck: Option<usize>,
    pub arities: [usize; 4],
    pub dropout: f64,
    pub seed: u64,
    pub config_hash: String,
    pub config: TrainConfig,
    pub tensors: Vec<TensorInfo>,
}

pub fn encode_checkpoint(params: &MtlParams, config: &TrainConfig) -> Vec<u8> {
    let tensors = params.weights.tensors();
    let header = CheckpointHeader {
        version: CHECKPOINT_VERSION,
        mode: params.mode,
        input_dim: params.input_dim(),
        hidden_dim: params.hidden_dim(),
        bottleneck: params.weights.adapter.as_ref().map(|_| Adapter::BOTTLENECK),
        arities: PathologyTask::ARITIES,
        dropout: params.dropout,
        seed: config.seed,
        config_hash: config.hash(),
        config: config.clone(),
        tensors: tensors
            .iter()
            .map(|(name, t)| TensorInfo {
                name: name.clone(),
                len: t.len(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(8 + json.len() + 8 * params.weights.param_count());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for (_, t) in tensors {
        for v in t {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<(MtlParams, CheckpointHeader)> {
    let bad = |m: &str| Error::Format(format!("checkpoint: {m}"));
    if bytes.len() < 8 || &bytes[..4] != MAGIC {
        return Err(bad("missing SGMT magic"));
    }
    let hlen = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let json = bytes.get(8..8 + hlen).ok_or_else(|| bad("truncated header"))?;
    let header: CheckpointHeader = serde_json::from_slice(json).map_err(|e| bad(&e.to_string()))?;
    if header.version != CHECKPOINT_VERSION {
        return Err(bad(&format!("unsupported version {}", header.version)));
    }
    if header.arities != PathologyTask::ARITIES {
        return Err(bad("head arities differ from [3, 3, 2, 2]"));
    }
    let mut params = MtlParams::zeros(header.mode, header.input_dim, header.hidden_dim);
    params.dropout = header.dropout;
    let expected: Vec<(String, usize)> =
        params.weights.tensors().into_iter().map(|(n, t)| (n, t.len())).collect();
    let listed: Vec<(String, usize)> = header.tensors.iter().map(|t| (t.name.clone(), t.len)).collect();
    if expected != listed {
        return Err(bad("tensor list does not match mode and dimensions"));
    }
    let mut data = &bytes[8 + hlen..];
    for t in params.weights.tensors_mut() {
        let need = t.len() * 8;
        if data.len() < need {
            return Err(bad("truncated tensor data"));
        }
        for (v, chunk) in t.iter_mut().zip(data[..need].chunks_exact(8)) {
            *v = f64::from_le_bytes(chunk.try_into().unwrap());
        }
        data = &data[need..];
    }
    if !data.is_empty() {
        return Err(bad("trailing bytes after tensors"));
    }
    Ok((params, header))
}

pub fn write_checkpoint(path: &Path, params: &MtlParams, config: &TrainConfig) -> Result<()> {
    std::fs::write(path, encode_checkpoint(params, config)).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<(MtlParams, CheckpointHeader)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}

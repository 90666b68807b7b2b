//! `HSRK` checkpoints: magic, version, length-prefixed JSON network config,
//! then the named parameter tensors in name order.

use std::path::Path;

use super::{put_f32s, write_atomic, Reader};
use crate::error::{Error, Result};
use crate::net::{HsrnetConfig, ParamStore};
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"HSRK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: HsrnetConfig,
    pub params: ParamStore,
}

pub fn encode_checkpoint(config: &HsrnetConfig, params: &ParamStore) -> Result<Vec<u8>> {
    let json = serde_json::to_vec(config).map_err(|e| Error::format("config", e.to_string()))?;
    let mut out = Vec::with_capacity(16 + json.len() + 4 * params.num_values());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for (name, t) in params.iter() {
        let name_len = u16::try_from(name.len())
            .map_err(|_| Error::format("tensor_name", format!("{name} is too long")))?;
        let ndim = u8::try_from(t.shape().len())
            .map_err(|_| Error::format("ndim", format!("{name} has too many dimensions")))?;
        out.extend_from_slice(&name_len.to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(ndim);
        for &d in t.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        put_f32s(&mut out, t.data());
    }
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader::new(bytes);
    let magic = r.take(4, "magic")?;
    if magic != CHECKPOINT_MAGIC {
        return Err(Error::format("magic", format!("expected \"HSRK\", found {magic:?}")));
    }
    let version = r.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::format("version", format!("unsupported version {version}")));
    }
    let json_len = r.u32("config_length")? as usize;
    let json = r.take(json_len, "config")?;
    let config: HsrnetConfig = serde_json::from_slice(json).map_err(|e| Error::format("config", e.to_string()))?;
    config
        .validate()
        .map_err(|e| Error::format("config", e.to_string()))?;
    let count = r.u32("tensor_count")?;
    let mut params = ParamStore::new();
    for _ in 0..count {
        let name_len = r.u16("tensor_name")? as usize;
        let name = std::str::from_utf8(r.take(name_len, "tensor_name")?)
            .map_err(|_| Error::format("tensor_name", "not UTF-8"))?
            .to_string();
        let ndim = r.u8("ndim")? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(r.u32("dims")? as usize);
        }
        let n = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::format("dims", format!("{name}: dimensions overflow")))?;
        let data = r.f32s(n, "payload")?;
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::format("payload", format!("{name} holds non-finite values")));
        }
        let t = Tensor::new(shape, data).map_err(|e| Error::format("dims", e.to_string()))?;
        params
            .insert(name, t)
            .map_err(|e| Error::format("tensor_name", e.to_string()))?;
    }
    r.finish("payload")?;
    params
        .check_against(&config)
        .map_err(|e| Error::format("tensors", e.to_string()))?;
    Ok(Checkpoint { config, params })
}

pub fn write_checkpoint(path: &Path, config: &HsrnetConfig, params: &ParamStore) -> Result<()> {
    write_atomic(path, &encode_checkpoint(config, params)?)
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    decode_checkpoint(&std::fs::read(path)?)
}

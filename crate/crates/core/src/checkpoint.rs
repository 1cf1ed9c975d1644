//! Binary model checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      8 bytes   "FBPRMF\0\0"
//! version    u32
//! header_len u64
//! header     JSON      {"dim":..,"users":[..],"items":[..]}
//! users      f64 × n_users·dim
//! items      f64 × n_items·dim
//! digest     32 bytes  SHA-256 of everything above
//! ```
//!
//! Factors are stored as raw IEEE-754 bits, so save → load is exact.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::FactorModel;

const MAGIC: &[u8; 8] = b"FBPRMF\0\0";
pub const FORMAT_VERSION: u32 = 1;
const DIGEST_LEN: usize = 32;

#[derive(Serialize, Deserialize)]
struct Header {
    dim: usize,
    users: Vec<String>,
    items: Vec<String>,
}

pub fn to_bytes(model: &FactorModel) -> Result<Vec<u8>> {
    let header = serde_json::to_vec(&Header {
        dim: model.dim(),
        users: model.user_ids().to_vec(),
        items: model.item_ids().to_vec(),
    })?;
    let n_floats = model.user_factors().len() + model.item_factors().len();
    let mut buf = Vec::with_capacity(20 + header.len() + 8 * n_floats + DIGEST_LEN);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(header.len() as u64).to_le_bytes());
    buf.extend_from_slice(&header);
    for x in model.user_factors().iter().chain(model.item_factors()) {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    let digest = Sha256::digest(&buf);
    buf.extend_from_slice(&digest);
    Ok(buf)
}

fn corrupt(msg: &str) -> Error {
    Error::Checkpoint(msg.to_string())
}

pub fn from_bytes(bytes: &[u8]) -> Result<FactorModel> {
    if bytes.len() < 20 + DIGEST_LEN || &bytes[..8] != MAGIC {
        return Err(corrupt("not a model checkpoint"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {version} (expected {FORMAT_VERSION})"
        )));
    }
    let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
    if Sha256::digest(body).as_slice() != digest {
        return Err(corrupt("checksum mismatch"));
    }
    let header_len = u64::from_le_bytes(body[12..20].try_into().unwrap()) as usize;
    let header_end = 20usize
        .checked_add(header_len)
        .filter(|&e| e <= body.len())
        .ok_or_else(|| corrupt("truncated header"))?;
    let header: Header = serde_json::from_slice(&body[20..header_end])
        .map_err(|e| Error::Checkpoint(format!("bad header: {e}")))?;
    let n_user = header.users.len() * header.dim;
    let n_item = header.items.len() * header.dim;
    let floats = &body[header_end..];
    if floats.len() != 8 * (n_user + n_item) {
        return Err(corrupt("factor payload has the wrong length"));
    }
    let mut values = floats
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    let user_factors: Vec<f64> = values.by_ref().take(n_user).collect();
    let item_factors: Vec<f64> = values.collect();
    FactorModel::from_parts(header.dim, header.users, header.items, user_factors, item_factors)
        .map_err(|e| Error::Checkpoint(e.to_string()))
}

pub fn save(model: &FactorModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_bytes(model)?).map_err(|e| Error::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<FactorModel> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}

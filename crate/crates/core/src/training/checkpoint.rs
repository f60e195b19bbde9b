//! Versioned binary checkpoints: a JSON metadata block followed by a
//! named table of little-endian `f64` tensors.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{ModelConfig, TrainConfig};
use super::trainer::LossRecord;
use crate::corpus::Vocabulary;
use crate::error::{Error, Result};
use crate::numerics::{RngState, Tensor};

const MAGIC: &[u8; 4] = b"DVCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub vocab: Vocabulary,
    pub seed: u64,
    pub config_hash: String,
    pub iteration: u64,
    pub epoch: u64,
    pub position: usize,
    pub order: Vec<usize>,
    pub rng: RngState,
    pub log: Vec<LossRecord>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub tensors: Vec<(String, Tensor)>,
}

/// Hash of everything a resumed run must share with the original; the
/// epoch budget is excluded so a run can be extended.
pub fn config_hash(model: &ModelConfig, train: &TrainConfig, vocab: &Vocabulary, seed: u64) -> Result<String> {
    let train = TrainConfig {
        max_epochs: 0,
        ..train.clone()
    };
    let blob = serde_json::to_vec(&(model, &train, vocab.tokens(), seed))?;
    Ok(Sha256::digest(&blob).iter().map(|b| format!("{b:02x}")).collect())
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        encode_container(MAGIC, CHECKPOINT_VERSION, &serde_json::to_vec(&self.meta)?, &self.tensors)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (meta, tensors) = decode_container(bytes, MAGIC, CHECKPOINT_VERSION)?;
        let meta: CheckpointMeta = serde_json::from_slice(meta)
            .map_err(|e| Error::Incompatible(format!("checkpoint metadata: {e}")))?;
        let expected = config_hash(&meta.model, &meta.train, &meta.vocab, meta.seed)?;
        if expected != meta.config_hash {
            return Err(Error::Incompatible("checkpoint config hash does not match its metadata".into()));
        }
        Ok(Checkpoint { meta, tensors })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }
}

/// `magic | version u32 | meta length u64 | meta | tensor count u32 |
/// (name length u32, name, ndim u32, dims u64…, values f64 LE…)*`.
pub(crate) fn encode_container(magic: &[u8; 4], version: u32, meta: &[u8], tensors: &[(String, Tensor)]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(magic);
    out.extend_from_slice(&version.to_le_bytes());
    out.extend_from_slice(&(meta.len() as u64).to_le_bytes());
    out.extend_from_slice(meta);
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, t) in tensors {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.dims().len() as u32).to_le_bytes());
        for &d in t.dims() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in t.values() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub(crate) fn decode_container<'a>(
    bytes: &'a [u8],
    magic: &[u8; 4],
    version: u32,
) -> Result<(&'a [u8], Vec<(String, Tensor)>)> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != magic {
        return Err(Error::Incompatible("not a checkpoint file (bad magic)".into()));
    }
    let found = r.u32()?;
    if found != version {
        return Err(Error::Incompatible(format!("checkpoint version {found}, expected {version}")));
    }
    let meta_len = r.u64()? as usize;
    let meta = r.take(meta_len)?;
    let count = r.u32()? as usize;
    let mut tensors = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = r.u32()? as usize;
        let name = String::from_utf8(r.take(name_len)?.to_vec())
            .map_err(|_| Error::Incompatible("tensor name is not UTF-8".into()))?;
        let ndim = r.u32()? as usize;
        let dims = (0..ndim).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let len: usize = dims.iter().product();
        let raw = r.take(len.checked_mul(8).ok_or_else(|| Error::Incompatible("tensor too large".into()))?)?;
        let values = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        tensors.push((name, Tensor::new(dims, values)?));
    }
    if r.pos != bytes.len() {
        return Err(Error::Incompatible("trailing bytes after tensor table".into()));
    }
    Ok((meta, tensors))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Incompatible("truncated checkpoint".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

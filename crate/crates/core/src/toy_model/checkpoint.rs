use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelConfig, ParamStore, ToyModel};
use crate::diffcore::sptn;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"SLCKPT01";

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub params: ParamStore,
    pub train_step: u64,
    pub seed: u64,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    train_step: u64,
    seed: u64,
    tensors: Vec<String>,
}

fn format_err(msg: impl Into<String>) -> Error {
    Error::Format {
        chunk: "checkpoint".into(),
        msg: msg.into(),
    }
}

impl Checkpoint {
    pub fn model(&self) -> Result<ToyModel> {
        ToyModel::from_params(self.config.clone(), self.params.clone())
    }

    /// Magic, little-endian `u64` header length, JSON header, then one
    /// SPTN tensor per parameter in header order.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            config: self.config.clone(),
            train_step: self.train_step,
            seed: self.seed,
            tensors: self.params.names().cloned().collect(),
        };
        let json = serde_json::to_vec(&header)?;
        let mut out = Vec::new();
        out.write_all(CHECKPOINT_MAGIC)?;
        out.write_all(&(json.len() as u64).to_le_bytes())?;
        out.write_all(&json)?;
        for (_, t) in self.params.iter() {
            sptn::write_tensor(&mut out, t)?;
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = bytes;
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|_| format_err("truncated magic"))?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(format_err("bad magic"));
        }
        let mut len = [0u8; 8];
        r.read_exact(&mut len).map_err(|_| format_err("truncated header length"))?;
        let len = u64::from_le_bytes(len) as usize;
        if len > r.len() {
            return Err(format_err("header length exceeds file"));
        }
        let header: Header = serde_json::from_slice(&r[..len]).map_err(|e| format_err(format!("header: {e}")))?;
        r = &r[len..];
        let mut params = ParamStore::default();
        for name in header.tensors {
            let t = sptn::read_tensor(&mut r)?;
            if !t.is_finite() {
                return Err(Error::NonFinite(format!("checkpoint tensor `{name}`")));
            }
            params.insert(name, t)?;
        }
        if !r.is_empty() {
            return Err(format_err("trailing bytes"));
        }
        header.config.validate()?;
        params.check_layout(&header.config)?;
        Ok(Checkpoint {
            config: header.config,
            params,
            train_step: header.train_step,
            seed: header.seed,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

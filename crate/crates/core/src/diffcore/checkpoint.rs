//! JSON checkpoint format:
//!
//! ```json
//! { "magic": "medmam-checkpoint", "format": 1,
//!   "params": { "<name>": { "shape": [..], "data": "<base64 little-endian f64>" } },
//!   "meta": { ... } }
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use serde::{Deserialize, Serialize};

use super::tensor::{Param, Tensor};
use crate::error::{Error, Result};

pub const MAGIC: &str = "medmam-checkpoint";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StoredTensor {
    shape: Vec<usize>,
    data: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointFile {
    magic: String,
    format: u32,
    params: BTreeMap<String, StoredTensor>,
    #[serde(default)]
    meta: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: BTreeMap<String, Tensor>,
    pub meta: serde_json::Value,
}

fn encode(t: &Tensor) -> StoredTensor {
    let mut bytes = Vec::with_capacity(t.len() * 8);
    for x in t.data() {
        bytes.extend_from_slice(&x.to_le_bytes());
    }
    StoredTensor {
        shape: t.shape().to_vec(),
        data: STANDARD.encode(bytes),
    }
}

fn decode(name: &str, s: &StoredTensor) -> Result<Tensor> {
    let bytes = STANDARD
        .decode(&s.data)
        .map_err(|e| Error::Checkpoint(format!("{name}: bad base64: {e}")))?;
    if bytes.len() % 8 != 0 {
        return Err(Error::Checkpoint(format!("{name}: {} bytes is not a whole number of f64", bytes.len())));
    }
    let data: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Tensor::new(s.shape.clone(), data).map_err(|e| Error::Checkpoint(format!("{name}: {e}")))
}

impl Checkpoint {
    pub fn from_params<'p>(params: impl IntoIterator<Item = &'p Param>, meta: serde_json::Value) -> Self {
        Self {
            params: params
                .into_iter()
                .map(|p| (p.name.clone(), p.value.clone()))
                .collect(),
            meta,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let file = CheckpointFile {
            magic: MAGIC.to_string(),
            format: FORMAT_VERSION,
            params: self.params.iter().map(|(k, v)| (k.clone(), encode(v))).collect(),
            meta: self.meta.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: CheckpointFile =
            serde_json::from_str(s).map_err(|e| Error::Checkpoint(format!("unreadable checkpoint: {e}")))?;
        if file.magic != MAGIC {
            return Err(Error::Checkpoint(format!("bad magic {:?}", file.magic)));
        }
        if file.format != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported format version {}", file.format)));
        }
        let mut params = BTreeMap::new();
        for (name, st) in &file.params {
            params.insert(name.clone(), decode(name, st)?);
        }
        Ok(Self { params, meta: file.meta })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Copy stored values into `params`. Every name and shape is checked
    /// before anything is written.
    pub fn apply<'p>(&self, params: impl IntoIterator<Item = &'p mut Param>) -> Result<()> {
        let params: Vec<&mut Param> = params.into_iter().collect();
        for p in &params {
            let stored = self
                .params
                .get(&p.name)
                .ok_or_else(|| Error::Checkpoint(format!("missing parameter {}", p.name)))?;
            if stored.shape() != p.value.shape() {
                return Err(Error::contract(format!(
                    "checkpoint parameter {} has shape {:?}, model expects {:?}",
                    p.name,
                    stored.shape(),
                    p.value.shape()
                )));
            }
        }
        if params.len() != self.params.len() {
            return Err(Error::Checkpoint(format!(
                "checkpoint holds {} parameters, model has {}",
                self.params.len(),
                params.len()
            )));
        }
        for p in params {
            p.value = self.params[&p.name].clone();
        }
        Ok(())
    }
}

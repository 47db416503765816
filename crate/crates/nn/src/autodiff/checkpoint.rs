use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AutodiffError, ParamStore, Result, Tensor};

pub const CHECKPOINT_VERSION: u32 = 1;

/// Versioned JSON manifest of named tensors. Values survive a write/read
/// cycle bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub tensors: BTreeMap<String, Tensor>,
    /// Free-form JSON carried alongside the tensors (model config, scalers).
    #[serde(default)]
    pub metadata: serde_json::Value,
}

impl Checkpoint {
    pub fn new(params: &ParamStore, metadata: serde_json::Value) -> Self {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            tensors: params.iter().map(|(k, t)| (k.clone(), t.clone())).collect(),
            metadata,
        }
    }

    pub fn params(&self) -> ParamStore {
        let mut p = ParamStore::new();
        for (k, t) in &self.tensors {
            p.insert(k.clone(), t.clone());
        }
        p
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("tensors serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: Checkpoint = serde_json::from_str(text).map_err(|e| AutodiffError::Checkpoint(e.to_string()))?;
        if c.version != CHECKPOINT_VERSION {
            return Err(AutodiffError::Checkpoint(format!(
                "unsupported version {} (expected {CHECKPOINT_VERSION})",
                c.version
            )));
        }
        for (k, t) in &c.tensors {
            if t.len() != t.shape().iter().product::<usize>() {
                return Err(AutodiffError::Checkpoint(format!(
                    "tensor {k:?} has inconsistent shape"
                )));
            }
        }
        Ok(c)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| AutodiffError::Checkpoint(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| AutodiffError::Checkpoint(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

//! Versioned JSON checkpoints for parameter sets and optimizer state.
//!
//! Floats are serialized with shortest round-trip formatting, so loading a
//! checkpoint reproduces forward passes bit for bit.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

use super::adam::AdamState;
use super::mlp::ParamSet;
use super::tensor::Tensor;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    /// Caller-defined metadata (model variant, normalization constants, ...).
    pub meta: Value,
    pub seed: u64,
    pub param_names: Vec<String>,
    pub params: Vec<Tensor>,
    pub adam: Option<AdamState>,
}

impl Checkpoint {
    pub fn from_params(
        params: &ParamSet,
        adam: Option<&AdamState>,
        seed: u64,
        meta: Value,
    ) -> Self {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            meta,
            seed,
            param_names: params.iter().map(|(n, _)| n.to_string()).collect(),
            params: params.iter().map(|(_, t)| t.clone()).collect(),
            adam: adam.cloned(),
        }
    }

    /// Restore values into a freshly built parameter set with matching names
    /// and shapes (the architecture is rebuilt by the caller, then filled).
    pub fn restore_into(&self, params: &mut ParamSet) -> Result<()> {
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported version {}",
                self.version
            )));
        }
        if params.len() != self.params.len() {
            return Err(Error::Checkpoint(format!(
                "parameter count mismatch: model has {}, checkpoint has {}",
                params.len(),
                self.params.len()
            )));
        }
        for id in params.ids().collect::<Vec<_>>() {
            let name = params.name(id).to_string();
            if name != self.param_names[id.index()] {
                return Err(Error::Checkpoint(format!(
                    "parameter {} does not match checkpoint entry {}",
                    name,
                    self.param_names[id.index()]
                )));
            }
            let stored = &self.params[id.index()];
            if stored.shape() != params.get(id).shape() {
                return Err(Error::Checkpoint(format!(
                    "shape mismatch for {name}: {:?} vs {:?}",
                    params.get(id).shape(),
                    stored.shape()
                )));
            }
            *params.get_mut(id) = stored.clone();
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string(self)?;
        crate::expbench::io::write_atomic(path, json.as_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

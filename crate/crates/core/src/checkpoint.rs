//! JSON checkpoint container: network spec, flat parameters and run metadata.
//!
//! Floats are written in shortest round-trip form and parsed back exactly,
//! so save/load is bit-exact.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nnet::{NetworkSpec, ParamVector};

pub const CHECKPOINT_FORMAT: &str = "semisdf-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub phase: String,
    pub epoch: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub spec: NetworkSpec,
    pub values: Vec<f64>,
    pub meta: CheckpointMeta,
}

impl Checkpoint {
    pub fn new(spec: &NetworkSpec, params: &ParamVector, meta: CheckpointMeta) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.to_owned(),
            version: CHECKPOINT_VERSION,
            spec: spec.clone(),
            values: params.values().to_vec(),
            meta,
        }
    }

    pub fn params(&self) -> Result<ParamVector> {
        ParamVector::from_values(&self.spec, self.values.clone())
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = self.to_json()?;
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let ckpt: Checkpoint = serde_json::from_str(&text).map_err(|e| Error::Format {
            path: path.to_owned(),
            reason: e.to_string(),
        })?;
        if ckpt.format != CHECKPOINT_FORMAT || ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::Format {
                path: path.to_owned(),
                reason: format!("unsupported checkpoint {} v{}", ckpt.format, ckpt.version),
            });
        }
        ckpt.spec.validate()?;
        ckpt.params()?;
        Ok(ckpt)
    }
}

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::TensorSnapshot;
use crate::util::{read_to_string, write_bytes};
use crate::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "hetgraph-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Self-describing model container: configuration, graph, normalization,
/// training position and every tensor with its shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub model: String,
    pub seed: u64,
    pub epoch: usize,
    pub tract_ids: Vec<String>,
    pub adjacency: Vec<Vec<f64>>,
    pub config: serde_json::Value,
    pub extra: serde_json::Value,
    pub tensors: Vec<TensorSnapshot>,
}

impl Checkpoint {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str, expected_model: &str) -> Result<Self> {
        let c: Checkpoint = serde_json::from_str(text)?;
        if c.format != CHECKPOINT_FORMAT || c.version != CHECKPOINT_VERSION {
            return Err(Error::Data(format!(
                "unsupported checkpoint {} v{}",
                c.format, c.version
            )));
        }
        if c.model != expected_model {
            return Err(Error::Data(format!(
                "checkpoint holds a {} model, expected {expected_model}",
                c.model
            )));
        }
        Ok(c)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_bytes(path, self.to_json()?.as_bytes())
    }

    pub fn load(path: &Path, expected_model: &str) -> Result<Self> {
        Self::from_json(&read_to_string(path)?, expected_model)
    }
}

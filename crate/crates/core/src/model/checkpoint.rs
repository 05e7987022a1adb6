//! Versioned JSON checkpoints: config, weights, optimizer state, and the
//! artifacts needed to reproduce scoring (vocabulary digest, level
//! distributions when content features are active).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AdamState, ModelConfig, ModelError, Parameters};
use crate::features::LevelPartition;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub config: ModelConfig,
    pub params: Parameters,
    pub adam: Option<AdamState>,
    pub vocab_digest: String,
    pub levels: Option<LevelPartition>,
}

impl Checkpoint {
    pub fn new(config: ModelConfig, params: Parameters, vocab_digest: String) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            config,
            params,
            adam: None,
            vocab_digest,
            levels: None,
        }
    }
}

pub fn save_checkpoint(path: impl AsRef<Path>, checkpoint: &Checkpoint) -> Result<(), ModelError> {
    let path = path.as_ref();
    let body = serde_json::to_vec(checkpoint).map_err(|e| ModelError::Checkpoint {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    fs::write(path, body).map_err(|e| ModelError::Checkpoint {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint, ModelError> {
    let path = path.as_ref();
    let body = fs::read(path).map_err(|e| ModelError::Checkpoint {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let checkpoint: Checkpoint =
        serde_json::from_slice(&body).map_err(|e| ModelError::Checkpoint {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
    if checkpoint.version != CHECKPOINT_VERSION {
        return Err(ModelError::Checkpoint {
            path: path.display().to_string(),
            message: format!(
                "version {} not supported (expected {CHECKPOINT_VERSION})",
                checkpoint.version
            ),
        });
    }
    checkpoint.params.assert_finite()?;
    Ok(checkpoint)
}

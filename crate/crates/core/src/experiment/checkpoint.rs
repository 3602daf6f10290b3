//! Versioned JSON dump of a trained bundle with the scenario it was trained
//! on and the configuration hash.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agents::train::AgentBundle;
use crate::error::{Error, Result};
use crate::scenario::ScenarioConfig;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub config_hash: String,
    pub seed: u64,
    /// Last completed training episode.
    pub episodes: usize,
    pub scenario: ScenarioConfig,
    pub bundle: AgentBundle,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        // Write then rename so a crash never leaves a half-written file.
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, serde_json::to_vec(self)?)?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        let ck: Self = serde_json::from_slice(&bytes).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        if ck.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("version {} is not supported", ck.version)));
        }
        if !ck.bundle.is_finite() {
            return Err(Error::Checkpoint("non-finite parameters".into()));
        }
        Ok(ck)
    }
}

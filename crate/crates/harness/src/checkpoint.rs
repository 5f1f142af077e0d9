//! Trained-agent snapshots.
//!
//! A checkpoint stores the experiment config alongside the full agent state
//! (networks, optimizers, multipliers, RNG streams) so evaluation and density
//! exports reconstruct exactly the policy that training ended with.  The
//! replay buffer is deliberately not persisted; a loaded agent can act and be
//! evaluated immediately but needs `buffer_mut().reset(..)` plus fresh
//! experience before further updates.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};

use flowsafe_core::agents::SacAgent;

use crate::config::ExperimentConfig;
use crate::HarnessError;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub agent: SacAgent<f64>,
}

impl Checkpoint {
    pub fn new(seed: u64, config: ExperimentConfig, agent: SacAgent<f64>) -> Self {
        Checkpoint { version: CHECKPOINT_VERSION, seed, config, agent }
    }

    pub fn save(&self, path: &Path) -> Result<(), HarnessError> {
        let io = |source| HarnessError::Io { path: path.to_path_buf(), source };
        let file = File::create(path).map_err(io)?;
        let mut w = BufWriter::new(file);
        serde_json::to_writer(&mut w, self)
            .map_err(|e| HarnessError::Checkpoint(format!("{}: write failed: {e}", path.display())))?;
        use std::io::Write;
        w.flush().map_err(io)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let file = File::open(path).map_err(|source| HarnessError::Io { path: path.to_path_buf(), source })?;
        let ck: Checkpoint = serde_json::from_reader(BufReader::new(file))
            .map_err(|e| HarnessError::Checkpoint(format!("{}: parse failed: {e}", path.display())))?;
        if ck.version != CHECKPOINT_VERSION {
            return Err(HarnessError::Checkpoint(format!(
                "{}: version {} unsupported (expected {})",
                path.display(),
                ck.version,
                CHECKPOINT_VERSION
            )));
        }
        Ok(ck)
    }
}

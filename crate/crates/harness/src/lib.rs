//! Experiment harness for the navigation benchmark: seeded training runs for
//! all four learner variants, per-episode metrics, greedy evaluation, policy
//! density/sample exports, and cross-run comparison.

use std::path::PathBuf;

use thiserror::Error;

pub mod compare;
pub mod config;
pub mod density;
pub mod evaluate;
pub mod metrics;
pub mod train;

mod checkpoint;

pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use config::ExperimentConfig;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config: {0}")]
    Config(String),
    #[error("metrics: {0}")]
    Metrics(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("environment protocol: {0}")]
    Env(String),
    #[error("training diverged at episode {episode}, step {step}: too many consecutive rejected updates")]
    Diverged { episode: u32, step: u64 },
    #[error("{0}")]
    InvalidArg(String),
}

impl HarnessError {
    pub fn kind(&self) -> &'static str {
        match self {
            HarnessError::Io { .. } => "io",
            HarnessError::Config(_) => "config",
            HarnessError::Metrics(_) => "metrics",
            HarnessError::Checkpoint(_) => "checkpoint",
            HarnessError::Env(_) => "env",
            HarnessError::Diverged { .. } => "diverged",
            HarnessError::InvalidArg(_) => "invalid-arg",
        }
    }

    /// Machine-readable one-line record for stderr.
    pub fn to_json(&self) -> String {
        serde_json::json!({ "error": self.kind(), "message": self.to_string() }).to_string()
    }
}

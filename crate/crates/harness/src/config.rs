//! TOML experiment configuration. Every field has a default, so a config
//! file only states what it changes; an empty file reproduces the standard
//! navigation benchmark.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use flowsafe_core::agents::{SacConfig, SacVariant};
use flowsafe_core::diffcore::Activation;
use flowsafe_core::env::EnvConfig;
use flowsafe_core::world::{BatteryRule, Rect, WorldLayout};

use crate::HarnessError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub variant: SacVariant,
    pub seeds: Vec<u64>,
    pub episodes: u32,
    /// One gradient round per this many environment steps (after warmup).
    pub update_every: u32,
    /// Every this many training episodes, run one greedy episode and log it
    /// to a sidecar CSV; 0 disables evaluation during training.
    pub eval_every: u32,
    pub out_dir: PathBuf,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        ExperimentSection {
            variant: SacVariant::Constrained,
            seeds: vec![0, 1, 2],
            episodes: 500,
            update_every: 4,
            eval_every: 0,
            out_dir: PathBuf::from("runs"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SacSection {
    pub gamma: f64,
    pub tau: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub warmup_steps: usize,
    pub hidden_width: usize,
    pub activation: Activation,
    pub target_entropy: f64,
    pub alpha_init: f64,
    pub penalty: f64,
    pub lambda_lr: f64,
    pub lambda_max: f64,
    pub cost_limit: f64,
}

impl Default for SacSection {
    fn default() -> Self {
        let c = SacConfig::<f64>::nav_default();
        SacSection {
            gamma: c.gamma,
            tau: c.tau,
            lr: c.lr,
            batch_size: c.batch_size,
            buffer_capacity: c.buffer_capacity,
            warmup_steps: c.warmup_steps,
            hidden_width: c.hidden_width,
            activation: c.activation,
            target_entropy: c.target_entropy,
            alpha_init: c.alpha_init,
            penalty: c.penalty,
            lambda_lr: c.lambda_lr,
            lambda_max: c.lambda_max,
            cost_limit: c.cost_limit,
        }
    }
}

impl SacSection {
    pub fn to_core(self) -> SacConfig<f64> {
        SacConfig {
            gamma: self.gamma,
            tau: self.tau,
            lr: self.lr,
            batch_size: self.batch_size,
            buffer_capacity: self.buffer_capacity,
            warmup_steps: self.warmup_steps,
            hidden_width: self.hidden_width,
            activation: self.activation,
            target_entropy: self.target_entropy,
            alpha_init: self.alpha_init,
            penalty: self.penalty,
            lambda_lr: self.lambda_lr,
            lambda_max: self.lambda_max,
            cost_limit: self.cost_limit,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LayoutSection {
    pub arena_low: [f64; 2],
    pub arena_high: [f64; 2],
    pub obstacle_low: [f64; 2],
    pub obstacle_high: [f64; 2],
    pub max_step: f64,
    pub stations: Vec<[f64; 2]>,
    pub station_radius: f64,
}

impl Default for LayoutSection {
    fn default() -> Self {
        let l = WorldLayout::<f64>::nav_default();
        LayoutSection {
            arena_low: l.arena.low,
            arena_high: l.arena.high,
            obstacle_low: l.obstacle.low,
            obstacle_high: l.obstacle.high,
            max_step: l.max_step,
            stations: l.stations,
            station_radius: l.station_radius,
        }
    }
}

impl LayoutSection {
    pub fn to_core(&self) -> WorldLayout<f64> {
        // Geometry is configurable; the construction tuning knobs (margin,
        // tie ramp, sliver width) stay at their audited defaults.
        WorldLayout {
            arena: Rect::new(self.arena_low, self.arena_high),
            obstacle: Rect::new(self.obstacle_low, self.obstacle_high),
            max_step: self.max_step,
            stations: self.stations.clone(),
            station_radius: self.station_radius,
            ..WorldLayout::nav_default()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BatterySection {
    pub capacity: f64,
    pub depletion: f64,
    pub threshold: f64,
    pub relax_level: f64,
    pub radius_min: f64,
    pub radius_max: f64,
}

impl Default for BatterySection {
    fn default() -> Self {
        let b = BatteryRule::<f64>::nav_default();
        BatterySection {
            capacity: b.capacity,
            depletion: b.depletion,
            threshold: b.threshold,
            relax_level: b.relax_level,
            radius_min: b.radius_min,
            radius_max: b.radius_max,
        }
    }
}

impl BatterySection {
    pub fn to_core(self) -> BatteryRule<f64> {
        BatteryRule {
            capacity: self.capacity,
            depletion: self.depletion,
            threshold: self.threshold,
            relax_level: self.relax_level,
            radius_min: self.radius_min,
            radius_max: self.radius_max,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvSection {
    pub goal_radius: f64,
    pub goal_bonus: f64,
    pub horizon: u32,
}

impl Default for EnvSection {
    fn default() -> Self {
        let e = EnvConfig::<f64>::nav_default();
        EnvSection {
            goal_radius: e.goal_radius,
            goal_bonus: e.goal_bonus,
            horizon: e.horizon,
        }
    }
}

impl EnvSection {
    pub fn to_core(self) -> EnvConfig<f64> {
        EnvConfig {
            goal_radius: self.goal_radius,
            goal_bonus: self.goal_bonus,
            horizon: self.horizon,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    pub sac: SacSection,
    pub layout: LayoutSection,
    pub battery: BatterySection,
    pub env: EnvSection,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let config: ExperimentConfig =
            toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let layout = self.layout.to_core();
        layout
            .validate()
            .map_err(|e| HarnessError::Config(format!("layout: {e}")))?;
        self.battery
            .to_core()
            .validate()
            .map_err(|e| HarnessError::Config(format!("battery: {e}")))?;
        if self.experiment.seeds.is_empty() {
            return Err(HarnessError::Config("seeds must not be empty".into()));
        }
        if self.experiment.episodes == 0 {
            return Err(HarnessError::Config("episodes must be positive".into()));
        }
        if self.experiment.update_every == 0 {
            return Err(HarnessError::Config("update_every must be positive".into()));
        }
        if self.sac.batch_size == 0 || self.sac.buffer_capacity < self.sac.batch_size {
            return Err(HarnessError::Config(
                "buffer must hold at least one batch".into(),
            ));
        }
        Ok(())
    }

    /// Name stem for one run's output files: `<variant>_seed<seed>`.
    pub fn run_stem(&self, seed: u64) -> String {
        let variant = match self.experiment.variant {
            SacVariant::Unconstrained => "unconstrained",
            SacVariant::Penalty => "penalty",
            SacVariant::Lagrangian => "lagrangian",
            SacVariant::Constrained => "constrained",
        };
        format!("{variant}_seed{seed}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_reproduces_the_benchmark_defaults() {
        let cfg = ExperimentConfig::parse("").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!(cfg.sac.to_core(), SacConfig::<f64>::nav_default());
        assert_eq!(cfg.experiment.episodes, 500);
        assert_eq!(cfg.experiment.seeds, vec![0, 1, 2]);
        let layout = cfg.layout.to_core();
        assert_eq!(layout.stations.len(), 4);
        assert_eq!(layout.max_step, 1.0);
    }

    #[test]
    fn partial_overrides_leave_other_fields_alone() {
        let cfg = ExperimentConfig::parse(
            r#"
[experiment]
variant = "penalty"
seeds = [7]
episodes = 20

[sac]
penalty = 12.5
batch_size = 32

[layout]
stations = [[5.0, 0.0]]
"#,
        )
        .unwrap();
        assert_eq!(cfg.experiment.variant, SacVariant::Penalty);
        assert_eq!(cfg.experiment.update_every, 4, "default survives");
        assert_eq!(cfg.sac.penalty, 12.5);
        assert_eq!(cfg.sac.batch_size, 32);
        assert_eq!(cfg.sac.gamma, 0.99, "default survives");
        assert_eq!(cfg.layout.stations, vec![[5.0, 0.0]]);
        assert_eq!(cfg.layout.max_step, 1.0, "default survives");
    }

    #[test]
    fn bad_configs_are_rejected_with_context() {
        assert!(matches!(
            ExperimentConfig::parse("[experiment]\nseeds = []"),
            Err(HarnessError::Config(_))
        ));
        assert!(matches!(
            ExperimentConfig::parse("[experiment]\nepisodes = 0"),
            Err(HarnessError::Config(_))
        ));
        assert!(matches!(
            ExperimentConfig::parse("[sac]\nbatch_size = 0"),
            Err(HarnessError::Config(_))
        ));
        // typos in keys must not be silently ignored
        assert!(matches!(
            ExperimentConfig::parse("[sac]\nlearning_rate = 0.1"),
            Err(HarnessError::Config(_))
        ));
        // geometry that breaks the world invariants is caught at load time
        assert!(matches!(
            ExperimentConfig::parse("[battery]\nrelax_level = 10.0"),
            Err(HarnessError::Config(_))
        ));
    }

    #[test]
    fn run_stems_name_variant_and_seed() {
        let mut cfg = ExperimentConfig::default();
        assert_eq!(cfg.run_stem(3), "constrained_seed3");
        cfg.experiment.variant = SacVariant::Lagrangian;
        assert_eq!(cfg.run_stem(11), "lagrangian_seed11");
    }
}

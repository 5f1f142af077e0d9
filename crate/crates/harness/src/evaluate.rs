//! Post-training evaluation: replay a checkpointed policy for a number of
//! episodes and summarize returns and violations.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use flowsafe_core::env::{NavEnv, Obs};

use crate::checkpoint::Checkpoint;
use crate::HarnessError;

#[derive(Clone, Copy, Debug, Serialize)]
pub struct EpisodeStats {
    pub ret: f64,
    pub violations_obstacle: u32,
    pub violations_battery: u32,
}

#[derive(Clone, Debug, Serialize)]
pub struct EvalReport {
    pub checkpoint: String,
    pub variant: String,
    pub mode: &'static str,
    pub episodes: u32,
    pub seed: u64,
    pub mean_return: f64,
    pub std_return: f64,
    pub mean_violations_obstacle: f64,
    pub mean_violations_battery: f64,
    pub per_episode: Vec<EpisodeStats>,
}

/// Roll a policy for `episodes` episodes on a freshly seeded environment.
/// The action closure sees the observation and must return a displacement.
pub fn rollout_episodes<F>(
    env: &mut NavEnv<f64>,
    episodes: u32,
    mut act: F,
) -> Result<Vec<EpisodeStats>, HarnessError>
where
    F: FnMut(&Obs<f64>) -> [f64; 2],
{
    let mut stats = Vec::with_capacity(episodes as usize);
    for _ in 0..episodes {
        let mut obs = env.reset();
        let mut ep = EpisodeStats {
            ret: 0.0,
            violations_obstacle: 0,
            violations_battery: 0,
        };
        loop {
            let out = env
                .step(&act(&obs))
                .map_err(|e| HarnessError::Env(e.to_string()))?;
            ep.ret += out.reward;
            ep.violations_obstacle += out.violated_obstacle as u32;
            ep.violations_battery += out.violated_battery as u32;
            obs = out.obs;
            if out.truncated {
                break;
            }
        }
        stats.push(ep);
    }
    Ok(stats)
}

/// Evaluate a saved checkpoint. Greedy mode replays the mean action;
/// stochastic mode samples from the policy with a dedicated seeded stream,
/// so repeated calls with the same arguments reproduce the same report.
pub fn evaluate(
    checkpoint: &Path,
    episodes: u32,
    seed: u64,
    stochastic: bool,
) -> Result<EvalReport, HarnessError> {
    if episodes == 0 {
        return Err(HarnessError::InvalidArg("episodes must be positive".into()));
    }
    let ck = Checkpoint::load(checkpoint)?;
    let mut env = NavEnv::new(
        ck.config.layout.to_core(),
        ck.config.battery.to_core(),
        ck.config.env.to_core(),
        seed,
    );
    let policy = ck.agent.policy();
    let per_episode = if stochastic {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5a3c_f00d);
        rollout_episodes(&mut env, episodes, |obs| policy.sample_action(obs, &mut rng).0)?
    } else {
        rollout_episodes(&mut env, episodes, |obs| policy.mean_action(obs))?
    };

    let n = per_episode.len() as f64;
    let mean_return = per_episode.iter().map(|e| e.ret).sum::<f64>() / n;
    let var = if per_episode.len() > 1 {
        per_episode
            .iter()
            .map(|e| (e.ret - mean_return).powi(2))
            .sum::<f64>()
            / (n - 1.0)
    } else {
        0.0
    };
    Ok(EvalReport {
        checkpoint: checkpoint.display().to_string(),
        variant: format!("{:?}", ck.agent.variant()),
        mode: if stochastic { "stochastic" } else { "greedy" },
        episodes,
        seed,
        mean_return,
        std_return: var.sqrt(),
        mean_violations_obstacle: per_episode
            .iter()
            .map(|e| e.violations_obstacle as f64)
            .sum::<f64>()
            / n,
        mean_violations_battery: per_episode
            .iter()
            .map(|e| e.violations_battery as f64)
            .sum::<f64>()
            / n,
        per_episode,
    })
}

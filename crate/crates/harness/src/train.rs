//! The training loop: seeded rollouts, cadenced gradient updates,
//! per-episode metrics, and a final checkpoint per run.

use std::path::PathBuf;
use std::time::Instant;

use serde::Serialize;

use flowsafe_core::agents::{SacAgent, Transition};
use flowsafe_core::env::NavEnv;

use crate::checkpoint::Checkpoint;
use crate::config::ExperimentConfig;
use crate::metrics::{EpisodeRecord, MetricsWriter};
use crate::HarnessError;

/// Consecutive rejected or non-finite updates tolerated before a run aborts.
const DIVERGENCE_PATIENCE: u32 = 50;

const TRAIN_ENV_SALT: u64 = 1;
const EVAL_ENV_SALT: u64 = 2;

/// splitmix64 finalizer over the run seed. The environment must not be
/// seeded with the raw run seed: the agent's RNGs already derive from it
/// (same key, separate stream ids), and an env built on the raw seed would
/// replay the agent's rollout stream draw for draw.
fn env_seed(run_seed: u64, salt: u64) -> u64 {
    let mut z = run_seed.wrapping_add(salt.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Clone, Debug, Serialize)]
pub struct TrainOutcome {
    pub seed: u64,
    pub episodes: u32,
    pub metrics_path: PathBuf,
    pub checkpoint_path: PathBuf,
    pub total_violations_obstacle: u64,
    pub total_violations_battery: u64,
    pub mean_return_last_tenth: f64,
    pub wall_seconds: f64,
}

/// Train one run per seed listed in the config, in order.
pub fn train_all(config: &ExperimentConfig) -> Result<Vec<TrainOutcome>, HarnessError> {
    config
        .experiment
        .seeds
        .iter()
        .map(|&seed| train(config, seed))
        .collect()
}

/// Train a single seeded run and write `<stem>.csv`, `<stem>_timing.csv`,
/// optionally `<stem>_eval.csv`, and `<stem>_checkpoint.json` under the
/// configured output directory.
pub fn train(config: &ExperimentConfig, seed: u64) -> Result<TrainOutcome, HarnessError> {
    config.validate()?;
    let started = Instant::now();

    let layout = config.layout.to_core();
    let rule = config.battery.to_core();
    let env_config = config.env.to_core();
    let mut agent = SacAgent::new(
        config.experiment.variant,
        config.sac.to_core(),
        layout.clone(),
        rule,
        seed,
    );
    let mut env = NavEnv::new(
        layout.clone(),
        rule,
        env_config,
        env_seed(seed, TRAIN_ENV_SALT),
    );

    let out_dir = config.experiment.out_dir.as_path();
    std::fs::create_dir_all(out_dir).map_err(|source| HarnessError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let stem = config.run_stem(seed);
    let mut writer = MetricsWriter::create(out_dir, &stem)?;
    let mut eval = if config.experiment.eval_every > 0 {
        let w = MetricsWriter::create(out_dir, &format!("{stem}_eval"))?;
        let e = NavEnv::new(layout, rule, env_config, env_seed(seed, EVAL_ENV_SALT));
        Some((w, e))
    } else {
        None
    };

    let mut records = Vec::with_capacity(config.experiment.episodes as usize);
    let mut total_steps: u64 = 0;
    let mut reject_streak: u32 = 0;
    for episode in 1..=config.experiment.episodes {
        let ep_start = Instant::now();
        let mut obs = env.reset();
        let mut ret = 0.0;
        let (mut vo, mut vb) = (0u32, 0u32);
        loop {
            let action = agent.rollout_action(&obs);
            let out = env
                .step(&action)
                .map_err(|e| HarnessError::Env(e.to_string()))?;
            agent.observe(Transition {
                obs,
                action,
                reward: out.reward,
                next_obs: out.obs,
                truncated: out.truncated,
                flag_obstacle: out.violated_obstacle,
                flag_battery: out.violated_battery,
            });
            ret += out.reward;
            vo += out.violated_obstacle as u32;
            vb += out.violated_battery as u32;
            total_steps += 1;
            if total_steps % config.experiment.update_every as u64 == 0 {
                if let Some(stats) = agent.update() {
                    let bad = stats.degenerate
                        || !stats.critic_loss.is_finite()
                        || !stats.actor_loss.is_finite();
                    reject_streak = if bad { reject_streak + 1 } else { 0 };
                    if reject_streak >= DIVERGENCE_PATIENCE {
                        return Err(HarnessError::Diverged {
                            episode,
                            step: total_steps,
                        });
                    }
                }
            }
            obs = out.obs;
            if out.truncated {
                break;
            }
        }
        let record = EpisodeRecord {
            episode,
            ret,
            violations_obstacle: vo,
            violations_battery: vb,
        };
        writer.write(&record, ep_start.elapsed().as_secs_f64())?;
        records.push(record);

        if let Some((w, e)) = eval.as_mut() {
            if episode % config.experiment.eval_every == 0 {
                let (eret, evo, evb) = greedy_episode(&agent, e)?;
                w.write(
                    &EpisodeRecord {
                        episode,
                        ret: eret,
                        violations_obstacle: evo,
                        violations_battery: evb,
                    },
                    0.0,
                )?;
            }
        }
    }

    let checkpoint_path = out_dir.join(format!("{stem}_checkpoint.json"));
    Checkpoint::new(seed, config.clone(), agent).save(&checkpoint_path)?;

    let tail = records.len().div_ceil(10);
    let last = &records[records.len() - tail..];
    Ok(TrainOutcome {
        seed,
        episodes: config.experiment.episodes,
        metrics_path: out_dir.join(format!("{stem}.csv")),
        checkpoint_path,
        total_violations_obstacle: records.iter().map(|r| r.violations_obstacle as u64).sum(),
        total_violations_battery: records.iter().map(|r| r.violations_battery as u64).sum(),
        mean_return_last_tenth: last.iter().map(|r| r.ret).sum::<f64>() / tail as f64,
        wall_seconds: started.elapsed().as_secs_f64(),
    })
}

/// One deterministic episode under the mean action; returns
/// (return, obstacle violations, battery violations).
fn greedy_episode(
    agent: &SacAgent<f64>,
    env: &mut NavEnv<f64>,
) -> Result<(f64, u32, u32), HarnessError> {
    let mut obs = env.reset();
    let mut ret = 0.0;
    let (mut vo, mut vb) = (0u32, 0u32);
    loop {
        let out = env
            .step(&agent.greedy_action(&obs))
            .map_err(|e| HarnessError::Env(e.to_string()))?;
        ret += out.reward;
        vo += out.violated_obstacle as u32;
        vb += out.violated_battery as u32;
        obs = out.obs;
        if out.truncated {
            return Ok((ret, vo, vb));
        }
    }
}

//! Finite-difference verification of the analytic update gradients.
//!
//! Each check builds a small smooth (tanh) learner, replays a fixed batch
//! with fixed noise, and compares the analytic gradient against a
//! fourth-order central difference parameter by parameter. The stencil keeps
//! truncation and rounding noise near 1e-10, far below the 1e-4 bar the
//! integration suite holds these to. Public so external suites can rerun the
//! same checks.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::diffcore::{Activation, Mlp};
use crate::env::{EnvConfig, NavEnv};
use crate::scalar::FloatT;
use crate::world::{BatteryRule, WorldLayout};

use super::buffer::Transition;
use super::sac::{CriticTargetKind, SacAgent};
use super::{SacConfig, SacVariant};

const BATCH: usize = 8;
const FD_STEP: f64 = 3e-4;
/// Denominator floor: components smaller than this are compared absolutely.
const REL_FLOOR: f64 = 1e-6;

fn rel_err(analytic: f64, fd: f64) -> f64 {
    (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(REL_FLOOR)
}

/// f'(x) from f(x-2h), f(x-h), f(x+h), f(x+2h).
fn stencil(fm2: f64, fm1: f64, fp1: f64, fp2: f64) -> f64 {
    (fm2 - 8.0 * fm1 + 8.0 * fp1 - fp2) / (12.0 * FD_STEP)
}

fn fixed_noise(seed: u64, n: usize) -> Vec<[f64; 2]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| [f64::std_normal(&mut rng), f64::std_normal(&mut rng)])
        .collect()
}

/// Width-8 tanh learner with a replay of short random rollouts. The twin
/// critics are spread apart so the min() branch cannot flip under the tiny
/// FD perturbations.
fn test_agent(seed: u64, variant: SacVariant) -> SacAgent<f64> {
    let config = SacConfig {
        batch_size: BATCH,
        buffer_capacity: 2048,
        warmup_steps: 0,
        hidden_width: 8,
        activation: Activation::Tanh,
        ..SacConfig::nav_default()
    };
    let mut agent = SacAgent::new(
        variant,
        config,
        WorldLayout::nav_default(),
        BatteryRule::nav_default(),
        seed,
    );
    agent.q2.nudge_output_bias(0, -3.0);
    let mut env = NavEnv::new(
        WorldLayout::nav_default(),
        BatteryRule::nav_default(),
        EnvConfig::nav_default(),
        seed ^ 0xace,
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xbee);
    let mut obs = env.reset();
    for _ in 0..120 {
        let a = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let o = env.step(&a).unwrap();
        agent.observe(Transition {
            obs,
            action: a,
            reward: o.reward,
            next_obs: o.obs,
            truncated: o.truncated,
            flag_obstacle: o.violated_obstacle,
            flag_battery: o.violated_battery,
        });
        obs = if o.truncated { env.reset() } else { o.obs };
    }
    agent
}

/// Worst relative disagreement between the analytic critic-loss gradient and
/// finite differences, over every parameter of one reward critic.
pub fn critic_gradient_error(seed: u64) -> f64 {
    let agent = test_agent(seed, SacVariant::Lagrangian);
    let idx: Vec<usize> = (0..BATCH).collect();
    let noise = fixed_noise(seed ^ 0x11, BATCH);
    let batch = agent.critic_targets(&idx, &noise);
    let (_, grads) = SacAgent::critic_grads(&agent.q1, &batch, CriticTargetKind::Reward);
    let analytic = grads.flat();
    let mut net = agent.q1.clone();
    let base = net.flat_params();
    let probe = |p: &mut Vec<f64>, i: usize, x: f64, net: &mut Mlp<f64>| {
        p[i] = x;
        net.set_flat_params(p).unwrap();
        SacAgent::critic_loss(net, &batch, CriticTargetKind::Reward)
    };
    let mut worst = 0.0f64;
    let mut p = base.clone();
    for i in 0..base.len() {
        let x = base[i];
        let fm2 = probe(&mut p, i, x - 2.0 * FD_STEP, &mut net);
        let fm1 = probe(&mut p, i, x - FD_STEP, &mut net);
        let fp1 = probe(&mut p, i, x + FD_STEP, &mut net);
        let fp2 = probe(&mut p, i, x + 2.0 * FD_STEP, &mut net);
        p[i] = x;
        worst = worst.max(rel_err(analytic[i], stencil(fm2, fm1, fp1, fp2)));
    }
    worst
}

/// Worst relative disagreement for the actor loss, over every policy-head
/// parameter. Runs twice: once with the constraint squash chain (ball + box)
/// and once with active Lagrangian cost terms, so both gradient routes are
/// exercised.
pub fn actor_gradient_error(seed: u64) -> f64 {
    let mut worst = 0.0f64;
    for variant in [SacVariant::Constrained, SacVariant::Lagrangian] {
        let mut agent = test_agent(seed, variant);
        if variant == SacVariant::Lagrangian {
            agent.lambdas = [0.7, 0.4];
        }
        let idx: Vec<usize> = (0..BATCH).collect();
        let noise = fixed_noise(seed ^ 0x22, BATCH);
        let eval = agent.actor_eval(&agent.policy, &idx, &noise, true);
        let analytic = eval.grads.expect("gradients were requested").flat();
        let mut probe_policy = agent.policy.clone();
        let base = probe_policy.head().flat_params();
        let mut p = base.clone();
        let probe = |p: &mut Vec<f64>, i: usize, x: f64, pol: &mut super::FlowPolicy<f64>| {
            p[i] = x;
            pol.head_mut().set_flat_params(p).unwrap();
            agent.actor_eval(pol, &idx, &noise, false).loss
        };
        for i in 0..base.len() {
            let x = base[i];
            let fm2 = probe(&mut p, i, x - 2.0 * FD_STEP, &mut probe_policy);
            let fm1 = probe(&mut p, i, x - FD_STEP, &mut probe_policy);
            let fp1 = probe(&mut p, i, x + FD_STEP, &mut probe_policy);
            let fp2 = probe(&mut p, i, x + 2.0 * FD_STEP, &mut probe_policy);
            p[i] = x;
            worst = worst.max(rel_err(analytic[i], stencil(fm2, fm1, fp1, fp2)));
        }
    }
    worst
}

/// Relative disagreement for the temperature gradient: the closed form
/// against finite differences of `-exp(la) * (mean log pi + target)`.
pub fn alpha_gradient_error(seed: u64) -> f64 {
    let agent = test_agent(seed, SacVariant::Constrained);
    let idx: Vec<usize> = (0..BATCH).collect();
    let noise = fixed_noise(seed ^ 0x33, BATCH);
    let mean_logp = agent
        .actor_eval(&agent.policy, &idx, &noise, false)
        .mean_log_prob;
    let target = agent.config().target_entropy;
    let la = agent.log_alpha;
    let analytic = -la.exp() * (mean_logp + target);
    let obj = |x: f64| -x.exp() * (mean_logp + target);
    let fd = stencil(
        obj(la - 2.0 * FD_STEP),
        obj(la - FD_STEP),
        obj(la + FD_STEP),
        obj(la + 2.0 * FD_STEP),
    );
    rel_err(analytic, fd)
}

//! Soft actor-critic learners in four safety variants over one policy class:
//! a Gaussian head squashed through invertible constraint maps.

mod buffer;
mod policy;
mod sac;

pub mod gradcheck;

pub use buffer::{ReplayBuffer, Transition};
pub use policy::{FlowPolicy, ObsNorm, SquashKind, LOG_SIGMA_MAX, LOG_SIGMA_MIN};
pub use sac::{SacAgent, UpdateStats};

use serde::{Deserialize, Serialize};

use crate::diffcore::Activation;
use crate::scalar::{c, FloatT};

/// How an agent deals with the constraints.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SacVariant {
    /// Ignores them; the reference point every safety mechanism is compared
    /// against.
    Unconstrained,
    /// Subtracts a fixed penalty from the reward on flagged transitions.
    Penalty,
    /// Learns per-constraint cost critics and prices violations through
    /// adaptive multipliers.
    Lagrangian,
    /// Squashes every sample into the constraint region, so flagged actions
    /// cannot be expressed at all.
    Constrained,
}

/// Hyperparameters shared by all variants. Fields irrelevant to a variant
/// (e.g. `penalty` for the plain learner) are simply unused.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SacConfig<T> {
    pub gamma: T,
    pub tau: T,
    pub lr: T,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    /// Environment steps driven by uniform support draws before the policy
    /// takes over; updates also wait for this budget.
    pub warmup_steps: usize,
    pub hidden_width: usize,
    pub activation: Activation,
    /// Entropy level the temperature controller steers toward.
    pub target_entropy: T,
    pub alpha_init: T,
    /// Reward charge per flagged transition (penalty variant).
    pub penalty: T,
    /// Multiplier learning rate (Lagrangian variant).
    pub lambda_lr: T,
    pub lambda_max: T,
    /// Discounted-cost level the multipliers defend (Lagrangian variant).
    pub cost_limit: T,
}

impl<T: FloatT> SacConfig<T> {
    pub fn nav_default() -> Self {
        SacConfig {
            gamma: c(0.99),
            tau: c(0.005),
            lr: c(3e-4),
            batch_size: 256,
            buffer_capacity: 100_000,
            warmup_steps: 1000,
            hidden_width: 64,
            activation: Activation::Relu,
            target_entropy: c(-2.0),
            alpha_init: c(0.2),
            penalty: c(100.0),
            lambda_lr: c(0.01),
            lambda_max: c(100.0),
            cost_limit: c(0.0),
        }
    }
}

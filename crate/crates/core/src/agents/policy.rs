//! Gaussian policy heads squashed through invertible constraint maps.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diffcore::{Activation, Mlp, MlpTrace};
use crate::env::Obs;
use crate::flows::{ConvexRegion, FlowChain, FlowStep};
use crate::scalar::{c, ln_two_pi, FloatT};
use crate::world::{battery_region, obstacle_region, BatteryRule, WorldLayout};

/// Clamp range for the head's raw log-sigma outputs.
pub const LOG_SIGMA_MIN: f64 = -5.0;
pub const LOG_SIGMA_MAX: f64 = 2.0;

/// Which squash a policy applies to its Gaussian samples.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SquashKind {
    /// A single tanh squash onto the free step box; the action may still
    /// violate constraints.
    UnitBox,
    /// State-dependent battery ball followed by the obstacle/wall box. The
    /// later step is applied last, so when the two regions conflict the box
    /// wins and obstacle/wall safety is preserved.
    Constrained,
}

/// Fixed affine observation normalizer derived from the world geometry:
/// positions map onto roughly [-1, 1] across the arena, battery onto [-1, 1]
/// across its capacity. Networks see normalized inputs; squash construction
/// always uses the raw observation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObsNorm<T> {
    center: [T; 2],
    inv_half: [T; 2],
    batt_half: T,
}

impl<T: FloatT> ObsNorm<T> {
    pub fn new(layout: &WorldLayout<T>, rule: &BatteryRule<T>) -> Self {
        let two = c::<T>(2.0);
        let center = [
            (layout.arena.low[0] + layout.arena.high[0]) / two,
            (layout.arena.low[1] + layout.arena.high[1]) / two,
        ];
        let inv_half = [
            two / (layout.arena.high[0] - layout.arena.low[0]),
            two / (layout.arena.high[1] - layout.arena.low[1]),
        ];
        ObsNorm {
            center,
            inv_half,
            batt_half: rule.capacity / two,
        }
    }

    pub fn apply(&self, obs: &Obs<T>) -> [T; 5] {
        [
            (obs[0] - self.center[0]) * self.inv_half[0],
            (obs[1] - self.center[1]) * self.inv_half[1],
            obs[2] / self.batt_half - T::one(),
            (obs[3] - self.center[0]) * self.inv_half[0],
            (obs[4] - self.center[1]) * self.inv_half[1],
        ]
    }
}

/// Head outputs for one observation, with the log-sigma clamp applied.
/// `in_clamp[d]` records whether the raw output sat strictly inside the clamp
/// window — the gradient gate for the direct log-sigma term.
pub(crate) struct HeadEval<T> {
    pub trace: MlpTrace<T>,
    pub mu: [T; 2],
    pub log_sigma: [T; 2],
    pub in_clamp: [bool; 2],
}

/// Log-density of the pre-squash Gaussian sample written in terms of its
/// standardized residuals: sum over dims of
/// `-0.5 ln(2 pi) - log_sigma - 0.5 xi^2`.
pub(crate) fn base_log_prob<T: FloatT>(xi: &[T; 2], log_sigma: &[T; 2]) -> T {
    let half = c::<T>(0.5);
    let mut lp = T::zero();
    for d in 0..2 {
        lp = lp - half * ln_two_pi::<T>() - log_sigma[d] - half * xi[d] * xi[d];
    }
    lp
}

/// Squashed-Gaussian policy. An MLP head maps the normalized observation to
/// the mean and log standard deviation of a 2-d Gaussian; the sample is then
/// pushed through an invertible squash chain rebuilt from the raw observation
/// at every call. Densities follow the change-of-variables rule exactly, so
/// `log_prob` and the samples' reported densities always agree.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FlowPolicy<T> {
    head: Mlp<T>,
    kind: SquashKind,
    layout: WorldLayout<T>,
    rule: BatteryRule<T>,
    norm: ObsNorm<T>,
}

impl<T: FloatT> FlowPolicy<T> {
    pub fn new<R: Rng + ?Sized>(
        kind: SquashKind,
        layout: WorldLayout<T>,
        rule: BatteryRule<T>,
        hidden_width: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let head = Mlp::init(&[5, hidden_width, hidden_width, 4], activation, rng)
            .expect("policy head architecture is valid");
        let norm = ObsNorm::new(&layout, &rule);
        FlowPolicy {
            head,
            kind,
            layout,
            rule,
            norm,
        }
    }

    pub fn kind(&self) -> SquashKind {
        self.kind
    }

    pub fn head(&self) -> &Mlp<T> {
        &self.head
    }

    /// Mutable head access, for shaping initial behaviour (e.g. nudging the
    /// log-sigma output biases) and for gradient diagnostics.
    pub fn head_mut(&mut self) -> &mut Mlp<T> {
        &mut self.head
    }

    pub fn norm(&self) -> &ObsNorm<T> {
        &self.norm
    }

    /// The squash chain for one observation. Constrained policies place the
    /// battery ball first and the obstacle/wall box last.
    pub fn chain(&self, obs: &Obs<T>) -> FlowChain<T> {
        let steps = match self.kind {
            SquashKind::UnitBox => {
                let m = self.layout.max_step;
                let bx = ConvexRegion::box_region(vec![-m, -m], vec![m, m])
                    .expect("step box is a valid region");
                vec![FlowStep::new(bx)]
            }
            SquashKind::Constrained => {
                let p = [obs[0], obs[1]];
                let ball = battery_region(&p, obs[2], &self.layout, &self.rule);
                let bx = obstacle_region(&p, &self.layout);
                vec![FlowStep::new(ball), FlowStep::new(bx)]
            }
        };
        FlowChain::new(steps).expect("squash steps share the action dimension")
    }

    pub(crate) fn head_eval(&self, norm_obs: &[T; 5]) -> HeadEval<T> {
        let trace = self.head.trace(norm_obs).expect("head takes 5 inputs");
        let out = trace.output();
        let lo = c::<T>(LOG_SIGMA_MIN);
        let hi = c::<T>(LOG_SIGMA_MAX);
        let mut mu = [T::zero(); 2];
        let mut log_sigma = [T::zero(); 2];
        let mut in_clamp = [false; 2];
        for d in 0..2 {
            mu[d] = out[d];
            let raw = out[2 + d];
            in_clamp[d] = raw > lo && raw < hi;
            log_sigma[d] = raw.max(lo).min(hi);
        }
        HeadEval {
            trace,
            mu,
            log_sigma,
            in_clamp,
        }
    }

    /// Deterministic companion of [`FlowPolicy::sample_action`]: push a fixed
    /// standard-normal draw through the reparameterization and the squash.
    pub(crate) fn sample_action_with(&self, obs: &Obs<T>, xi: &[T; 2]) -> ([T; 2], T) {
        let h = self.head_eval(&self.norm.apply(obs));
        let u = [
            h.mu[0] + h.log_sigma[0].exp() * xi[0],
            h.mu[1] + h.log_sigma[1].exp() * xi[1],
        ];
        let chain = self.chain(obs);
        let (y, log_det) = chain.forward(&u).expect("squash accepts any finite input");
        ([y[0], y[1]], base_log_prob(xi, &h.log_sigma) - log_det)
    }

    /// Draw an action and its exact log-density.
    pub fn sample_action<R: Rng + ?Sized>(&self, obs: &Obs<T>, rng: &mut R) -> ([T; 2], T) {
        let xi = [T::std_normal(rng), T::std_normal(rng)];
        self.sample_action_with(obs, &xi)
    }

    /// Deterministic action: the Gaussian mean pushed through the squash.
    pub fn mean_action(&self, obs: &Obs<T>) -> [T; 2] {
        let h = self.head_eval(&self.norm.apply(obs));
        let chain = self.chain(obs);
        let (y, _) = chain
            .forward(&[h.mu[0], h.mu[1]])
            .expect("squash accepts any finite input");
        [y[0], y[1]]
    }

    /// Exact log-density of `action` under this policy, or `None` when the
    /// action lies outside the squash image.
    pub fn log_prob(&self, obs: &Obs<T>, action: &[T; 2]) -> Option<T> {
        let chain = self.chain(obs);
        let u = chain.inverse(action).ok()?;
        let h = self.head_eval(&self.norm.apply(obs));
        let (_, log_det) = chain.forward(&u).expect("preimage is finite");
        let mut xi = [T::zero(); 2];
        for d in 0..2 {
            xi[d] = (u[d] - h.mu[d]) / h.log_sigma[d].exp();
        }
        Some(base_log_prob(&xi, &h.log_sigma) - log_det)
    }

    /// Density of `action`; zero outside the support.
    pub fn density(&self, obs: &Obs<T>, action: &[T; 2]) -> T {
        self.log_prob(obs, action).map_or(T::zero(), |lp| lp.exp())
    }

    /// Uniform draw over the squash image; the exploration source before any
    /// learning happens. Constrained supports are sampled by rejection from
    /// the final box through the chain inverse, which keeps the draw uniform
    /// on the true (intersection) support.
    pub fn uniform_support_action<R: Rng + ?Sized>(&self, obs: &Obs<T>, rng: &mut R) -> [T; 2] {
        let chain = self.chain(obs);
        let region = chain.final_region().expect("chain has at least one step");
        let (low, high) = match region {
            ConvexRegion::Box { low, high } => (low.clone(), high.clone()),
            other => other.bounding_box(),
        };
        loop {
            let a = [
                rng.random_range(low[0]..high[0]),
                rng.random_range(low[1]..high[1]),
            ];
            if chain.inverse(&a).is_ok() {
                return a;
            }
        }
    }
}

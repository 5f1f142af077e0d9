//! The navigation environment: a point agent in a square arena with a fixed
//! central obstacle, a battery that drains every step, and charging stations
//! along the walls. The agent chases a goal that is resampled each time it is
//! reached; episodes truncate at a fixed horizon and never terminate early.
//!
//! Constraint flags are computed from the *proposed* displacement before
//! motion is resolved, so they measure what the policy asked for. The
//! resolved motion itself can never penetrate the obstacle or the walls.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{c, FloatT};
use crate::world::{
    battery_after, resolve_motion, violates_obstacle, BatteryRule, Rect, WorldLayout,
};

/// Episode parameters layered on top of the world geometry.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig<T> {
    /// Arriving within this distance of the goal pays the bonus.
    pub goal_radius: T,
    pub goal_bonus: T,
    /// Episodes truncate after this many steps.
    pub horizon: u32,
}

impl<T: FloatT> EnvConfig<T> {
    pub fn nav_default() -> Self {
        Self {
            goal_radius: c(0.3),
            goal_bonus: c(10.0),
            horizon: 100,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EnvError {
    #[error("step called before the first reset")]
    NotReset,
    #[error("episode already truncated; reset before stepping")]
    EpisodeOver,
}

/// Everything one transition reports.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepOutcome<T> {
    pub obs: [T; 5],
    pub reward: T,
    pub truncated: bool,
    /// The proposed motion would have touched the obstacle or left the arena.
    pub violated_obstacle: bool,
    /// Post-step charge fell below the battery threshold.
    pub violated_battery: bool,
}

/// Observation layout: `(x, y, battery, goal_x, goal_y)`.
pub type Obs<T> = [T; 5];

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NavEnv<T> {
    layout: WorldLayout<T>,
    rule: BatteryRule<T>,
    config: EnvConfig<T>,
    rng: ChaCha8Rng,
    position: [T; 2],
    battery: T,
    goal: [T; 2],
    steps: u32,
    live: bool,
}

impl<T: FloatT> NavEnv<T> {
    /// A fresh environment. Nothing is sampled until the first `reset`;
    /// consecutive resets draw new episodes from the same seeded stream.
    pub fn new(layout: WorldLayout<T>, rule: BatteryRule<T>, config: EnvConfig<T>, seed: u64) -> Self {
        use rand::SeedableRng;
        Self {
            layout,
            rule,
            config,
            rng: ChaCha8Rng::seed_from_u64(seed),
            position: [T::zero(); 2],
            battery: T::zero(),
            goal: [T::zero(); 2],
            steps: 0,
            live: false,
        }
    }

    /// Start a new episode: collision-free start and goal by rejection, full
    /// battery.
    pub fn reset(&mut self) -> Obs<T> {
        let start = sample_free_position(&mut self.rng, &self.layout);
        let goal = self.sample_goal(&start);
        self.position = start;
        self.goal = goal;
        self.battery = self.rule.capacity;
        self.steps = 0;
        self.live = true;
        self.obs()
    }

    /// Start an episode from exact state — scripted tests and diagnostics.
    pub fn reset_to(&mut self, position: [T; 2], goal: [T; 2], battery: T) -> Obs<T> {
        assert!(
            self.layout.position_ok(&position),
            "reset_to with an illegal position"
        );
        self.position = position;
        self.goal = goal;
        self.battery = battery;
        self.steps = 0;
        self.live = true;
        self.obs()
    }

    /// Advance one step with a proposed displacement. The proposal is clipped
    /// to the per-axis action bound, flags are raised against that proposal,
    /// then motion is resolved and the battery updated at the endpoint.
    pub fn step(&mut self, action: &[T; 2]) -> Result<StepOutcome<T>, EnvError> {
        if !self.live {
            return Err(if self.steps == 0 {
                EnvError::NotReset
            } else {
                EnvError::EpisodeOver
            });
        }
        let s = self.layout.max_step;
        let a = [
            action[0].max(-s).min(s),
            action[1].max(-s).min(s),
        ];

        let violated_obstacle = violates_obstacle(&self.position, &a, &self.layout);
        let endpoint = resolve_motion(&self.position, &a, &self.layout);
        let next_charge = battery_after(&endpoint, self.battery, &self.layout, &self.rule);
        let violated_battery = next_charge < self.rule.threshold;

        let dist = distance(&endpoint, &self.goal);
        let mut reward = -dist;
        if dist <= self.config.goal_radius {
            reward = reward + self.config.goal_bonus;
            self.goal = self.sample_goal(&endpoint);
        }

        self.position = endpoint;
        self.battery = next_charge;
        self.steps += 1;
        let truncated = self.steps >= self.config.horizon;
        if truncated {
            self.live = false;
        }
        Ok(StepOutcome {
            obs: self.obs(),
            reward,
            truncated,
            violated_obstacle,
            violated_battery,
        })
    }

    pub fn obs(&self) -> Obs<T> {
        [
            self.position[0],
            self.position[1],
            self.battery,
            self.goal[0],
            self.goal[1],
        ]
    }

    pub fn position(&self) -> [T; 2] {
        self.position
    }

    pub fn battery(&self) -> T {
        self.battery
    }

    pub fn goal(&self) -> [T; 2] {
        self.goal
    }

    pub fn steps(&self) -> u32 {
        self.steps
    }

    pub fn layout(&self) -> &WorldLayout<T> {
        &self.layout
    }

    pub fn rule(&self) -> &BatteryRule<T> {
        &self.rule
    }

    pub fn config(&self) -> &EnvConfig<T> {
        &self.config
    }

    fn sample_goal(&mut self, away_from: &[T; 2]) -> [T; 2] {
        loop {
            let g = sample_free_position(&mut self.rng, &self.layout);
            if distance(&g, away_from) > self.config.goal_radius {
                return g;
            }
        }
    }
}

fn distance<T: FloatT>(a: &[T; 2], b: &[T; 2]) -> T {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    (dx * dx + dy * dy).sqrt()
}

fn sample_free_position<T: FloatT, R: Rng + ?Sized>(rng: &mut R, layout: &WorldLayout<T>) -> [T; 2] {
    let Rect { low, high } = layout.arena.clone();
    let m = layout.margin;
    loop {
        let p = [
            rng.random_range(low[0] + m..high[0] - m),
            rng.random_range(low[1] + m..high[1] - m),
        ];
        if layout.position_ok(&p) {
            return p;
        }
    }
}

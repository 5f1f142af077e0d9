//! Uniform-replay transition store.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::scalar::FloatT;

/// One environment step as the learner sees it. Constraint flags refer to the
/// *proposed* motion (the quantity the agent is judged on), not the resolved
/// one.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition<T> {
    pub obs: [T; 5],
    pub action: [T; 2],
    pub reward: T,
    pub next_obs: [T; 5],
    /// Episode ended by the step limit; the bootstrap term is dropped.
    pub truncated: bool,
    pub flag_obstacle: bool,
    pub flag_battery: bool,
}

/// Fixed-capacity ring buffer with uniform sampling (with replacement).
///
/// `Default` builds a zero-capacity shell — that is what a deserialized agent
/// carries, since replay contents are deliberately not part of checkpoints.
/// Call [`ReplayBuffer::reset`] before pushing into one.
#[derive(Clone, Debug, Default)]
pub struct ReplayBuffer<T> {
    data: Vec<Transition<T>>,
    next: usize,
    capacity: usize,
}

impl<T: FloatT> ReplayBuffer<T> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay buffer needs room for transitions");
        ReplayBuffer {
            data: Vec::new(),
            next: 0,
            capacity,
        }
    }

    /// Drop all contents and re-size; the recovery path for agents restored
    /// from a checkpoint, whose buffer arrives empty with zero capacity.
    pub fn reset(&mut self, capacity: usize) {
        *self = Self::new(capacity);
    }

    pub fn push(&mut self, tr: Transition<T>) {
        assert!(
            self.capacity > 0,
            "pushing into a zero-capacity buffer; call reset() after loading a checkpoint"
        );
        if self.data.len() < self.capacity {
            self.data.push(tr);
        } else {
            self.data[self.next] = tr;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn get(&self, i: usize) -> &Transition<T> {
        &self.data[i]
    }

    /// `n` indices drawn uniformly with replacement.
    pub fn sample_indices<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<usize> {
        assert!(!self.is_empty(), "sampling from an empty buffer");
        (0..n).map(|_| rng.random_range(0..self.data.len())).collect()
    }
}

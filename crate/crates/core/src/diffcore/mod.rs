//! Minimal dense-network autodiff: fully-connected nets with exact
//! reverse-mode gradients, plain SGD, Adam, and polyak target averaging.
//!
//! Weights are stored row-major (`out_dim x in_dim`) and every loop runs in a
//! fixed order, so results are bit-reproducible for a given seed.

mod mlp;
mod optim;

pub use mlp::{Activation, Gradients, Mlp, MlpTrace};
pub use optim::{polyak_update, sgd_step, Adam, AdamScalar};

use thiserror::Error;

/// Errors from network construction, evaluation, and parameter updates.
#[derive(Debug, Error)]
pub enum DiffError {
    #[error("input has length {got}, network expects {want}")]
    ShapeMismatch { want: usize, got: usize },
    #[error("gradient shape does not match network ({0})")]
    GradShapeMismatch(String),
    #[error("non-finite gradient in layer {layer} at index {index}")]
    NonFiniteGradient { layer: usize, index: usize },
    #[error("network architectures differ: {0}")]
    ArchMismatch(String),
    #[error("invalid architecture: {0}")]
    InvalidArch(String),
}

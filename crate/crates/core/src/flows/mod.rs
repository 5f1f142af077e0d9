//! Invertible constraint squashes.
//!
//! Each [`FlowStep`] maps all of `R^m` smoothly and bijectively onto the
//! interior of a bounded convex region, with an analytic inverse and an
//! analytic log-determinant of the Jacobian. A [`FlowChain`] composes steps;
//! composing squashes for several constraints guarantees the output lies in
//! the *last* step's region, which is what gives constraint priority: later
//! steps override earlier ones wherever the regions disagree.

mod chain;
mod region;
mod step;

pub use chain::{ChainTrace, FlowChain};
pub use region::{unit_box, ConvexRegion, LowerTriangular};
pub use step::FlowStep;

use thiserror::Error;

/// Absolute distance from a region boundary below which inverse maps refuse
/// to evaluate (the pre-image magnitude diverges there).
pub const BOUNDARY_GUARD: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("dimension mismatch: expected {want}, got {got}")]
    Dim { want: usize, got: usize },
    #[error("invalid region: {0}")]
    InvalidRegion(String),
    #[error("point is outside the map's range or within the boundary guard")]
    OutsideSupport,
    #[error("chain mixes step dimensions: {0:?}")]
    MixedDims(Vec<usize>),
}

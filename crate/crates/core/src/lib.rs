//! Safe-by-construction stochastic policies for continuous control.
//!
//! The crate provides the pieces of a soft actor-critic agent whose Gaussian
//! policy is pushed through analytically invertible squashing maps onto
//! state-dependent convex regions, so that every sampled action satisfies
//! instantaneous constraints by construction:
//!
//! - [`diffcore`]: dense networks with exact reverse-mode gradients, Adam,
//!   polyak averaging;
//! - [`flows`]: invertible constraint squashes (box / ball / ellipsoid) with
//!   exact log-determinants and chain composition;
//! - [`world`]: state-conditioned region construction for a 2-D navigation
//!   world plus the constraint-violation indicators;
//! - [`env`]: the navigation environment (goal reaching, battery, walls,
//!   one rectangular obstacle);
//! - [`agents`]: the actor-critic variants (unconstrained, reward penalty,
//!   multiplier-based, and flow-constrained).
//!
//! All numerics are generic over the scalar type; the aliases below pin the
//! `f64` instantiations used by the training stack and the file formats.

pub mod agents;
pub mod diffcore;
pub mod env;
pub mod flows;
pub mod scalar;
pub mod world;

pub use scalar::FloatT;

/// Scalar type used by the shipped binaries and file formats.
pub type Real = f64;

/// `f64` network.
pub type Mlp = diffcore::Mlp<Real>;
/// `f64` network gradients.
pub type Gradients = diffcore::Gradients<Real>;
/// `f64` Adam state.
pub type Adam = diffcore::Adam<Real>;

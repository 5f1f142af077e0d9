//! Scalar abstraction for the numeric core.
//!
//! Everything numeric in this crate is generic over [`FloatT`] so the same
//! code instantiates at `f32` and `f64`. The crate root exports `f64` aliases,
//! which is what the training stack and the file formats use.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};
use rand::distr::uniform::SampleUniform;
use rand::Rng;
use rand_distr::StandardNormal;

/// Floating-point scalar: `f32` or `f64`.
pub trait FloatT:
    Float
    + NumAssign
    + FromPrimitive
    + ToPrimitive
    + SampleUniform
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// One draw from the standard normal distribution.
    fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;
}

impl FloatT for f32 {
    fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.sample(StandardNormal)
    }
}

impl FloatT for f64 {
    fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.sample(StandardNormal)
    }
}

/// Convert an `f64` constant into `T`. Panics on values outside the target
/// range, which cannot happen for the literal constants this is used with.
#[inline]
pub fn c<T: FloatT>(x: f64) -> T {
    T::from_f64(x).expect("constant representable in scalar type")
}

/// ln(2π), used by Gaussian log-densities.
pub fn ln_two_pi<T: FloatT>() -> T {
    c(std::f64::consts::TAU.ln())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn std_normal_is_deterministic_per_seed() {
        let mut a = ChaCha8Rng::seed_from_u64(7);
        let mut b = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let xa: f64 = FloatT::std_normal(&mut a);
            let xb: f64 = FloatT::std_normal(&mut b);
            assert_eq!(xa.to_bits(), xb.to_bits());
        }
    }

    #[test]
    fn std_normal_moments_are_plausible() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 200_000;
        let (mut sum, mut sq) = (0.0f64, 0.0f64);
        for _ in 0..n {
            let x: f64 = FloatT::std_normal(&mut rng);
            sum += x;
            sq += x * x;
        }
        let mean = sum / n as f64;
        let var = sq / n as f64 - mean * mean;
        assert!(mean.abs() < 0.01, "mean {mean}");
        assert!((var - 1.0).abs() < 0.02, "var {var}");
    }
}

use serde::{Deserialize, Serialize};

use super::step::FlowStep;
use super::FlowError;
use crate::scalar::FloatT;

/// Ordered composition of flow steps. The output always lies in the last
/// step's region, so ordering encodes constraint priority.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowChain<T> {
    steps: Vec<FlowStep<T>>,
}

/// Intermediate points of a chain forward pass: `points[0]` is the input,
/// `points[k + 1]` the output of step `k`.
#[derive(Debug, Clone)]
pub struct ChainTrace<T> {
    pub points: Vec<Vec<T>>,
    pub log_det: T,
}

impl<T: FloatT> ChainTrace<T> {
    pub fn output(&self) -> &[T] {
        self.points.last().expect("trace holds at least the input")
    }
}

impl<T: FloatT> FlowChain<T> {
    /// Every step must act on the same dimension. An empty chain is the
    /// identity map.
    pub fn new(steps: Vec<FlowStep<T>>) -> Result<Self, FlowError> {
        if steps.windows(2).any(|w| w[0].dim() != w[1].dim()) {
            return Err(FlowError::MixedDims(
                steps.iter().map(|s| s.dim()).collect(),
            ));
        }
        Ok(FlowChain { steps })
    }

    pub fn identity() -> Self {
        FlowChain { steps: Vec::new() }
    }

    pub fn steps(&self) -> &[FlowStep<T>] {
        &self.steps
    }

    /// `None` for the identity chain, which accepts any dimension.
    pub fn dim(&self) -> Option<usize> {
        self.steps.first().map(|s| s.dim())
    }

    /// Region the final output is guaranteed to lie in, if any step exists.
    pub fn final_region(&self) -> Option<&super::ConvexRegion<T>> {
        self.steps.last().map(|s| s.region())
    }

    /// Composite map with the summed log-determinant
    /// `sum_k ln |det J_k|` evaluated at the intermediate points.
    pub fn forward(&self, x: &[T]) -> Result<(Vec<T>, T), FlowError> {
        let mut cur = x.to_vec();
        let mut log_det = T::zero();
        for step in &self.steps {
            log_det = log_det + step.log_det(&cur)?;
            cur = step.forward(&cur)?;
        }
        Ok((cur, log_det))
    }

    /// Forward pass keeping every intermediate point for a later [`Self::vjp`].
    pub fn forward_trace(&self, x: &[T]) -> Result<ChainTrace<T>, FlowError> {
        let mut points = Vec::with_capacity(self.steps.len() + 1);
        points.push(x.to_vec());
        let mut log_det = T::zero();
        for step in &self.steps {
            let cur = points.last().expect("non-empty");
            log_det = log_det + step.log_det(cur)?;
            let next = step.forward(cur)?;
            points.push(next);
        }
        Ok(ChainTrace { points, log_det })
    }

    /// Pre-image of `y` under the composite map. Fails with
    /// [`FlowError::OutsideSupport`] when `y` is not in the chain's range —
    /// note the range of a multi-step chain is a subset of the last region,
    /// because earlier steps restrict what reaches the later ones.
    pub fn inverse(&self, y: &[T]) -> Result<Vec<T>, FlowError> {
        let mut cur = y.to_vec();
        for step in self.steps.iter().rev() {
            cur = step.inverse(&cur)?;
        }
        Ok(cur)
    }

    /// Reverse-mode pullback through the whole chain:
    /// gradient of `<output, output_grad> + logdet_grad * total_log_det`
    /// with respect to the chain input.
    pub fn vjp(
        &self,
        trace: &ChainTrace<T>,
        output_grad: &[T],
        logdet_grad: T,
    ) -> Result<Vec<T>, FlowError> {
        if trace.points.len() != self.steps.len() + 1 {
            return Err(FlowError::Dim {
                want: self.steps.len() + 1,
                got: trace.points.len(),
            });
        }
        let mut g = output_grad.to_vec();
        for (k, step) in self.steps.iter().enumerate().rev() {
            g = step.vjp(&trace.points[k], &g, logdet_grad)?;
        }
        Ok(g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flows::{unit_box, ConvexRegion};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn two_step_chain() -> FlowChain<f64> {
        // Ball squash first, box squash last (the box has priority).
        let ball = FlowStep::new(ConvexRegion::ball(vec![0.3, -0.2], 0.8).unwrap());
        let bx = FlowStep::new(
            ConvexRegion::box_region(vec![-0.5, -1.0], vec![1.0, 0.75]).unwrap(),
        );
        FlowChain::new(vec![ball, bx]).unwrap()
    }

    #[test]
    fn identity_chain_is_identity() {
        let chain: FlowChain<f64> = FlowChain::identity();
        let x = vec![0.7, -1.3, 2.0];
        let (y, ld) = chain.forward(&x).unwrap();
        assert_eq!(y, x);
        assert_eq!(ld, 0.0);
        let trace = chain.forward_trace(&x).unwrap();
        let g = chain.vjp(&trace, &[1.0, 2.0, 3.0], 0.5).unwrap();
        assert_eq!(g, vec![1.0, 2.0, 3.0]);
        assert_eq!(chain.inverse(&x).unwrap(), x);
    }

    #[test]
    fn mixed_dimensions_are_rejected() {
        let a = FlowStep::new(unit_box::<f64>(2));
        let b = FlowStep::new(unit_box::<f64>(3));
        assert!(matches!(
            FlowChain::new(vec![a, b]),
            Err(FlowError::MixedDims(_))
        ));
    }

    #[test]
    fn log_det_sums_over_steps() {
        let chain = two_step_chain();
        let x = vec![0.4, -1.1];
        let (y, total) = chain.forward(&x).unwrap();
        let ld0 = chain.steps()[0].log_det(&x).unwrap();
        let mid = chain.steps()[0].forward(&x).unwrap();
        let ld1 = chain.steps()[1].log_det(&mid).unwrap();
        assert!((total - (ld0 + ld1)).abs() < 1e-14);
        assert_eq!(y, chain.steps()[1].forward(&mid).unwrap());
    }

    #[test]
    fn output_lands_in_final_region_and_round_trips() {
        let chain = two_step_chain();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..2000 {
            let x: Vec<f64> = (0..2).map(|_| rng.random_range(-4.0..4.0)).collect();
            let (y, _) = chain.forward(&x).unwrap();
            assert!(chain.final_region().unwrap().contains(&y));
            let back = chain.inverse(&y).unwrap();
            for (a, b) in back.iter().zip(&x) {
                assert!((a - b).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn inverse_rejects_points_outside_the_composite_range() {
        // (0.9, 0.7) lies inside the final box but outside the image of the
        // first step's ball, so the composite inverse must reject it.
        let chain = two_step_chain();
        let y = [0.9, 0.7];
        assert!(chain.steps()[1].region().contains(&y));
        assert!(matches!(chain.inverse(&y), Err(FlowError::OutsideSupport)));
    }

    #[test]
    fn swapping_steps_changes_the_map() {
        let chain = two_step_chain();
        let swapped = FlowChain::new(vec![
            chain.steps()[1].clone(),
            chain.steps()[0].clone(),
        ])
        .unwrap();
        let x = [0.25, 0.1];
        let (a, _) = chain.forward(&x).unwrap();
        let (b, _) = swapped.forward(&x).unwrap();
        let dist = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
        assert!(dist > 1e-3, "priority order must matter, got {dist}");
    }

    #[test]
    fn single_box_step_vjp_is_the_tanh_derivative() {
        let chain = FlowChain::new(vec![FlowStep::new(
            ConvexRegion::box_region(vec![-2.0, 0.0], vec![2.0, 3.0]).unwrap(),
        )])
        .unwrap();
        let x = vec![0.6_f64, -1.2];
        let trace = chain.forward_trace(&x).unwrap();
        // Pull back unit cotangents with no log-det weight.
        let gx = chain.vjp(&trace, &[1.0, 0.0], 0.0).unwrap();
        let gy = chain.vjp(&trace, &[0.0, 1.0], 0.0).unwrap();
        let w = [2.0, 1.5];
        assert!((gx[0] - w[0] * (1.0 - x[0].tanh().powi(2))).abs() < 1e-14);
        assert!(gx[1].abs() < 1e-14);
        assert!((gy[1] - w[1] * (1.0 - x[1].tanh().powi(2))).abs() < 1e-14);
        assert!(gy[0].abs() < 1e-14);
    }

    #[test]
    fn chain_vjp_matches_finite_differences() {
        let chain = two_step_chain();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let h = 1e-6;
        for _ in 0..300 {
            let x: Vec<f64> = (0..2).map(|_| rng.random_range(-2.0..2.0)).collect();
            let g: Vec<f64> = (0..2).map(|_| rng.random_range(-1.0..1.0)).collect();
            let gld: f64 = rng.random_range(-1.0..1.0);
            let trace = chain.forward_trace(&x).unwrap();
            let grad = chain.vjp(&trace, &g, gld).unwrap();
            let scalar = |x: &[f64]| -> f64 {
                let (y, ld) = chain.forward(x).unwrap();
                y.iter().zip(&g).map(|(a, b)| a * b).sum::<f64>() + gld * ld
            };
            for j in 0..2 {
                let mut xp = x.clone();
                xp[j] += h;
                let up = scalar(&xp);
                xp[j] = x[j] - h;
                let dn = scalar(&xp);
                let fd = (up - dn) / (2.0 * h);
                let denom = grad[j].abs().max(fd.abs()).max(1e-6);
                assert!(
                    (grad[j] - fd).abs() / denom <= 1e-5,
                    "axis {j}: {} vs {fd}",
                    grad[j]
                );
            }
        }
    }
}

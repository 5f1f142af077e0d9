use serde::{Deserialize, Serialize};

use super::region::ConvexRegion;
use super::{FlowError, BOUNDARY_GUARD};
use crate::scalar::{c, FloatT};

/// One invertible squash of `R^m` onto the interior of a convex region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowStep<T> {
    region: ConvexRegion<T>,
}

/// `ln(1 - tanh(x)^2)`, evaluated without forming `1 - tanh^2` (which
/// underflows to zero once `|x|` exceeds ~19 and would turn the log-density
/// into `-inf`).
#[inline]
fn ln_sech2<T: FloatT>(x: T) -> T {
    let a = x.abs();
    let two = c::<T>(2.0);
    two * (c::<T>(std::f64::consts::LN_2) - a - (-two * a).exp().ln_1p())
}

/// `tanh(r) / r` with the removable singularity at zero filled by its series
/// `1 - r^2/3 + O(r^4)`.
#[inline]
fn tanh_over_r<T: FloatT>(r: T) -> T {
    if r < c(1e-6) {
        T::one() - r * r / c(3.0)
    } else {
        r.tanh() / r
    }
}

/// `atanh(rho) / rho` with the same treatment (`1 + rho^2/3 + O(rho^4)`).
#[inline]
fn atanh_over_r<T: FloatT>(rho: T) -> T {
    if rho < c(1e-6) {
        T::one() + rho * rho / c(3.0)
    } else {
        rho.atanh() / rho
    }
}

/// `s'(r) / r` where `s = tanh(r)/r`; tends to `-2/3` at zero.
#[inline]
fn ds_over_r<T: FloatT>(r: T, s: T) -> T {
    if r < c(1e-4) {
        c::<T>(-2.0 / 3.0) + c::<T>(8.0 / 15.0) * r * r
    } else {
        let t = r.tanh();
        ((T::one() - t * t) - s) / (r * r)
    }
}

/// Radial factor of the log-det gradient for an `m`-dimensional ball squash:
/// `[(m-1) s'/s - 2 tanh(r)] / r`, finite at zero.
#[inline]
fn logdet_radial_coeff<T: FloatT>(m: usize, r: T, s: T) -> T {
    let m1 = c::<T>((m - 1) as f64);
    if r < c(1e-4) {
        // (m-1)(-2r/3) - 2r, divided by r.
        -(m1 + m1) / c::<T>(3.0) - c::<T>(2.0)
    } else {
        let t = r.tanh();
        let ds = ds_over_r(r, s) * r; // s'(r)
        (m1 * ds / s - c::<T>(2.0) * t) / r
    }
}

fn norm<T: FloatT>(x: &[T]) -> T {
    let mut sq = T::zero();
    for &v in x {
        sq = sq + v * v;
    }
    sq.sqrt()
}

/// Unit-ball squash `x -> tanh(|x|)/|x| * x` pieces, shared by the ball and
/// ellipsoid variants.
struct BallParts<T> {
    r: T,
    s: T,
}

fn ball_parts<T: FloatT>(x: &[T]) -> BallParts<T> {
    let r = norm(x);
    BallParts {
        r,
        s: tanh_over_r(r),
    }
}

fn unit_ball_forward<T: FloatT>(x: &[T]) -> Vec<T> {
    let p = ball_parts(x);
    x.iter().map(|&v| p.s * v).collect()
}

/// Log-determinant of the unit-ball squash Jacobian:
/// `(m-1) ln(tanh r / r) + ln(1 - tanh^2 r)`.
fn unit_ball_log_det<T: FloatT>(x: &[T]) -> T {
    let m = x.len();
    let p = ball_parts(x);
    c::<T>((m - 1) as f64) * p.s.ln() + ln_sech2(p.r)
}

fn unit_ball_inverse<T: FloatT>(z: &[T], guard: T) -> Result<Vec<T>, FlowError> {
    let rho = norm(z);
    if rho >= T::one() - guard {
        return Err(FlowError::OutsideSupport);
    }
    let k = atanh_over_r(rho);
    Ok(z.iter().map(|&v| k * v).collect())
}

/// Pullback through the unit-ball squash: `J^T g + g_ld * grad(log_det)`.
fn unit_ball_vjp<T: FloatT>(x: &[T], g: &[T], logdet_grad: T) -> Vec<T> {
    let m = x.len();
    let p = ball_parts(x);
    let dot = x.iter().zip(g).fold(T::zero(), |acc, (&a, &b)| acc + a * b);
    let radial = ds_over_r(p.r, p.s) * dot + logdet_grad * logdet_radial_coeff(m, p.r, p.s);
    x.iter()
        .zip(g)
        .map(|(&xv, &gv)| p.s * gv + radial * xv)
        .collect()
}

impl<T: FloatT> FlowStep<T> {
    pub fn new(region: ConvexRegion<T>) -> Self {
        FlowStep { region }
    }

    pub fn region(&self) -> &ConvexRegion<T> {
        &self.region
    }

    pub fn dim(&self) -> usize {
        self.region.dim()
    }

    fn check_dim(&self, x: &[T]) -> Result<(), FlowError> {
        if x.len() != self.dim() {
            return Err(FlowError::Dim {
                want: self.dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Map a free vector into the region interior.
    pub fn forward(&self, x: &[T]) -> Result<Vec<T>, FlowError> {
        self.check_dim(x)?;
        Ok(match &self.region {
            ConvexRegion::Box { low, high } => (0..x.len())
                .map(|d| {
                    let center = (low[d] + high[d]) / c(2.0);
                    let half = (high[d] - low[d]) / c(2.0);
                    center + half * x[d].tanh()
                })
                .collect(),
            ConvexRegion::Ball { center, radius } => {
                let z = unit_ball_forward(x);
                (0..x.len()).map(|d| center[d] + *radius * z[d]).collect()
            }
            ConvexRegion::Ellipsoid { center, scale } => {
                let z = unit_ball_forward(x);
                let lz = scale.matvec(&z);
                (0..x.len()).map(|d| center[d] + lz[d]).collect()
            }
        })
    }

    /// Pre-image of an interior point. Points outside the region, or within
    /// [`BOUNDARY_GUARD`] of its boundary, are rejected.
    pub fn inverse(&self, y: &[T]) -> Result<Vec<T>, FlowError> {
        self.check_dim(y)?;
        let guard = c::<T>(BOUNDARY_GUARD);
        match &self.region {
            ConvexRegion::Box { low, high } => {
                let mut x = Vec::with_capacity(y.len());
                for d in 0..y.len() {
                    let center = (low[d] + high[d]) / c(2.0);
                    let half = (high[d] - low[d]) / c(2.0);
                    let u = y[d] - center;
                    if u.abs() >= half - guard {
                        return Err(FlowError::OutsideSupport);
                    }
                    x.push((u / half).atanh());
                }
                Ok(x)
            }
            ConvexRegion::Ball { center, radius } => {
                let z: Vec<T> = (0..y.len())
                    .map(|d| (y[d] - center[d]) / *radius)
                    .collect();
                // Guard in world units: |y - c| must stay guard short of R.
                unit_ball_inverse(&z, guard / *radius)
            }
            ConvexRegion::Ellipsoid { center, scale } => {
                let rhs: Vec<T> = (0..y.len()).map(|d| y[d] - center[d]).collect();
                let z = scale.solve(&rhs);
                unit_ball_inverse(&z, guard)
            }
        }
    }

    /// `ln |det J_f(x)|` of the forward map at `x`.
    pub fn log_det(&self, x: &[T]) -> Result<T, FlowError> {
        self.check_dim(x)?;
        Ok(match &self.region {
            ConvexRegion::Box { low, high } => {
                let mut acc = T::zero();
                for d in 0..x.len() {
                    let half = (high[d] - low[d]) / c(2.0);
                    acc = acc + half.ln() + ln_sech2(x[d]);
                }
                acc
            }
            ConvexRegion::Ball { center, radius } => {
                // (m-1) ln(R s) + ln(R (1 - tanh^2 r)) = m ln R + unit-ball term
                let m = center.len();
                c::<T>(m as f64) * radius.ln() + unit_ball_log_det(x)
            }
            ConvexRegion::Ellipsoid { scale, .. } => scale.log_det() + unit_ball_log_det(x),
        })
    }

    /// Reverse-mode pullback: returns
    /// `J_f(x)^T output_grad + logdet_grad * grad_x(log_det)`.
    pub fn vjp(&self, x: &[T], output_grad: &[T], logdet_grad: T) -> Result<Vec<T>, FlowError> {
        self.check_dim(x)?;
        self.check_dim(output_grad)?;
        Ok(match &self.region {
            ConvexRegion::Box { low, high } => (0..x.len())
                .map(|d| {
                    let half = (high[d] - low[d]) / c(2.0);
                    let t = x[d].tanh();
                    let sech2 = T::one() - t * t;
                    output_grad[d] * half * sech2 - logdet_grad * c::<T>(2.0) * t
                })
                .collect(),
            ConvexRegion::Ball { radius, .. } => {
                let scaled: Vec<T> = output_grad.iter().map(|&g| *radius * g).collect();
                unit_ball_vjp(x, &scaled, logdet_grad)
            }
            ConvexRegion::Ellipsoid { scale, .. } => {
                let pulled = scale.transpose_matvec(output_grad);
                unit_ball_vjp(x, &pulled, logdet_grad)
            }
        })
    }
}

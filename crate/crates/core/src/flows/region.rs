use serde::{Deserialize, Serialize};

use super::FlowError;
use crate::scalar::{c, FloatT};

/// Lower-triangular matrix with strictly positive diagonal, stored packed
/// (row 0 first, row `i` holding `i + 1` entries).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowerTriangular<T> {
    dim: usize,
    data: Vec<T>,
}

impl<T: FloatT> LowerTriangular<T> {
    pub fn new(dim: usize, data: Vec<T>) -> Result<Self, FlowError> {
        if data.len() != dim * (dim + 1) / 2 {
            return Err(FlowError::InvalidRegion(format!(
                "packed lower-triangular of dim {dim} needs {} entries, got {}",
                dim * (dim + 1) / 2,
                data.len()
            )));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(FlowError::InvalidRegion("non-finite factor entry".into()));
        }
        let lt = LowerTriangular { dim, data };
        for i in 0..dim {
            if lt.diag(i) <= T::zero() {
                return Err(FlowError::InvalidRegion(format!(
                    "factor diagonal {i} must be positive"
                )));
            }
        }
        Ok(lt)
    }

    /// Diagonal scaling matrix.
    pub fn from_diag(diag: &[T]) -> Result<Self, FlowError> {
        let dim = diag.len();
        let mut data = vec![T::zero(); dim * (dim + 1) / 2];
        let mut k = 0;
        for (i, &d) in diag.iter().enumerate() {
            k += i;
            data[k] = d;
            k += 1;
        }
        Self::new(dim, data)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    fn row(&self, i: usize) -> &[T] {
        let start = i * (i + 1) / 2;
        &self.data[start..start + i + 1]
    }

    #[inline]
    pub fn diag(&self, i: usize) -> T {
        self.data[i * (i + 1) / 2 + i]
    }

    /// `L z`.
    pub fn matvec(&self, z: &[T]) -> Vec<T> {
        (0..self.dim)
            .map(|i| {
                let row = self.row(i);
                let mut acc = T::zero();
                for (j, &l) in row.iter().enumerate() {
                    acc = acc + l * z[j];
                }
                acc
            })
            .collect()
    }

    /// `L^T g`.
    pub fn transpose_matvec(&self, g: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.dim];
        for i in 0..self.dim {
            let row = self.row(i);
            for (j, &l) in row.iter().enumerate() {
                out[j] = out[j] + l * g[i];
            }
        }
        out
    }

    /// Solve `L z = rhs` by forward substitution.
    pub fn solve(&self, rhs: &[T]) -> Vec<T> {
        let mut z = vec![T::zero(); self.dim];
        for i in 0..self.dim {
            let row = self.row(i);
            let mut acc = rhs[i];
            for j in 0..i {
                acc = acc - row[j] * z[j];
            }
            z[i] = acc / row[i];
        }
        z
    }

    /// `sum_d ln L_dd`, the log-volume scale of the factor.
    pub fn log_det(&self) -> T {
        (0..self.dim).fold(T::zero(), |acc, i| acc + self.diag(i).ln())
    }
}

/// Bounded convex region a flow step squashes onto.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ConvexRegion<T> {
    /// Axis-aligned box `low < y < high` (componentwise).
    Box { low: Vec<T>, high: Vec<T> },
    /// Euclidean ball `|y - center| < radius`.
    Ball { center: Vec<T>, radius: T },
    /// Image of the unit ball under `y = center + L u`.
    Ellipsoid {
        center: Vec<T>,
        scale: LowerTriangular<T>,
    },
}

impl<T: FloatT> ConvexRegion<T> {
    pub fn box_region(low: Vec<T>, high: Vec<T>) -> Result<Self, FlowError> {
        if low.len() != high.len() || low.is_empty() {
            return Err(FlowError::InvalidRegion(format!(
                "box bounds have lengths {} and {}",
                low.len(),
                high.len()
            )));
        }
        for d in 0..low.len() {
            if !(low[d].is_finite() && high[d].is_finite()) || low[d] >= high[d] {
                return Err(FlowError::InvalidRegion(format!(
                    "box axis {d}: need finite low < high, got [{}, {}]",
                    low[d], high[d]
                )));
            }
        }
        Ok(ConvexRegion::Box { low, high })
    }

    pub fn ball(center: Vec<T>, radius: T) -> Result<Self, FlowError> {
        if center.is_empty() {
            return Err(FlowError::InvalidRegion("empty ball center".into()));
        }
        if !center.iter().all(|v| v.is_finite()) || !radius.is_finite() || radius <= T::zero() {
            return Err(FlowError::InvalidRegion(format!(
                "ball needs finite center and radius > 0, got radius {radius}"
            )));
        }
        Ok(ConvexRegion::Ball { center, radius })
    }

    pub fn ellipsoid(center: Vec<T>, scale: LowerTriangular<T>) -> Result<Self, FlowError> {
        if center.len() != scale.dim() {
            return Err(FlowError::InvalidRegion(format!(
                "ellipsoid center dim {} vs factor dim {}",
                center.len(),
                scale.dim()
            )));
        }
        if !center.iter().all(|v| v.is_finite()) {
            return Err(FlowError::InvalidRegion("non-finite center".into()));
        }
        Ok(ConvexRegion::Ellipsoid { center, scale })
    }

    pub fn dim(&self) -> usize {
        match self {
            ConvexRegion::Box { low, .. } => low.len(),
            ConvexRegion::Ball { center, .. } => center.len(),
            ConvexRegion::Ellipsoid { center, .. } => center.len(),
        }
    }

    /// Strict interior membership.
    pub fn contains(&self, y: &[T]) -> bool {
        if y.len() != self.dim() {
            return false;
        }
        match self {
            ConvexRegion::Box { low, high } => (0..y.len()).all(|d| low[d] < y[d] && y[d] < high[d]),
            ConvexRegion::Ball { center, radius } => {
                let mut sq = T::zero();
                for d in 0..y.len() {
                    let diff = y[d] - center[d];
                    sq = sq + diff * diff;
                }
                sq.sqrt() < *radius
            }
            ConvexRegion::Ellipsoid { center, scale } => {
                let rhs: Vec<T> = (0..y.len()).map(|d| y[d] - center[d]).collect();
                let u = scale.solve(&rhs);
                let mut sq = T::zero();
                for v in &u {
                    sq = sq + *v * *v;
                }
                sq.sqrt() < T::one()
            }
        }
    }

    /// Axis-aligned bounding box `(low, high)`.
    pub fn bounding_box(&self) -> (Vec<T>, Vec<T>) {
        match self {
            ConvexRegion::Box { low, high } => (low.clone(), high.clone()),
            ConvexRegion::Ball { center, radius } => (
                center.iter().map(|&v| v - *radius).collect(),
                center.iter().map(|&v| v + *radius).collect(),
            ),
            ConvexRegion::Ellipsoid { center, scale } => {
                // Half-extent along axis d is the row norm |L_{d,:}|.
                let mut low = Vec::with_capacity(center.len());
                let mut high = Vec::with_capacity(center.len());
                for d in 0..center.len() {
                    let mut sq = T::zero();
                    for j in 0..=d {
                        let l = scale.row(d)[j];
                        sq = sq + l * l;
                    }
                    let ext = sq.sqrt();
                    low.push(center[d] - ext);
                    high.push(center[d] + ext);
                }
                (low, high)
            }
        }
    }
}

/// Shorthand for the `[-1, 1]^m` box every unconstrained-style policy
/// squashes onto.
pub fn unit_box<T: FloatT>(dim: usize) -> ConvexRegion<T> {
    ConvexRegion::box_region(vec![c(-1.0); dim], vec![c(1.0); dim])
        .expect("unit box is a valid region")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lower_triangular_solve_inverts_matvec() {
        let l = LowerTriangular::new(3, vec![2.0, 0.5, 1.5, -0.3, 0.8, 0.9]).unwrap();
        let z = [0.3_f64, -1.2, 2.0];
        let y = l.matvec(&z);
        let back = l.solve(&y);
        for (a, b) in back.iter().zip(&z) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn lower_triangular_rejects_bad_diagonal() {
        assert!(LowerTriangular::new(2, vec![1.0, 0.0, 0.0]).is_err());
        assert!(LowerTriangular::new(2, vec![1.0, 0.0, -0.5]).is_err());
    }

    #[test]
    fn region_validation() {
        assert!(ConvexRegion::box_region(vec![0.0, 0.0], vec![1.0, 0.0]).is_err());
        assert!(ConvexRegion::ball(vec![0.0], 0.0).is_err());
        assert!(ConvexRegion::ball(vec![0.0], f64::NAN).is_err());
        assert!(ConvexRegion::box_region(vec![-1.0], vec![1.0]).is_ok());
    }

    #[test]
    fn containment_is_strict() {
        let b: ConvexRegion<f64> = ConvexRegion::box_region(vec![0.0], vec![1.0]).unwrap();
        assert!(b.contains(&[0.5]));
        assert!(!b.contains(&[1.0]));
        assert!(!b.contains(&[0.0]));
        let s = ConvexRegion::ball(vec![0.0, 0.0], 1.0).unwrap();
        assert!(s.contains(&[0.6, 0.6]));
        assert!(!s.contains(&[1.0, 0.0]));
    }

    #[test]
    fn ellipsoid_bounding_box_covers_samples() {
        let l = LowerTriangular::new(2, vec![1.5, 0.7, 0.4]).unwrap();
        let e = ConvexRegion::ellipsoid(vec![0.5, -0.5], l.clone()).unwrap();
        let (lo, hi) = e.bounding_box();
        for k in 0..200 {
            let th = k as f64 / 200.0 * std::f64::consts::TAU;
            let u = [th.cos(), th.sin()];
            let y = l.matvec(&u);
            let p = [0.5 + y[0], -0.5 + y[1]];
            assert!(p[0] >= lo[0] - 1e-12 && p[0] <= hi[0] + 1e-12);
            assert!(p[1] >= lo[1] - 1e-12 && p[1] <= hi[1] + 1e-12);
        }
    }
}

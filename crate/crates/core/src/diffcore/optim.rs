use serde::{Deserialize, Serialize};

use super::mlp::{Gradients, Mlp};
use super::DiffError;
use crate::scalar::{c, FloatT};

fn check_grads<T: FloatT>(net: &Mlp<T>, grads: &Gradients<T>) -> Result<(), DiffError> {
    if grads.w.len() != net.layers().len() {
        return Err(DiffError::GradShapeMismatch(format!(
            "gradient holds {} layers, network has {}",
            grads.w.len(),
            net.layers().len()
        )));
    }
    for (l, layer) in net.layers().iter().enumerate() {
        if grads.w[l].len() != layer.w.len() || grads.b[l].len() != layer.b.len() {
            return Err(DiffError::GradShapeMismatch(format!(
                "layer {l} gradient shape mismatch"
            )));
        }
    }
    if let Some((layer, index)) = grads.find_non_finite() {
        return Err(DiffError::NonFiniteGradient { layer, index });
    }
    Ok(())
}

/// Plain gradient step `p <- p - lr * g`. Rejects non-finite gradients
/// without touching the parameters.
pub fn sgd_step<T: FloatT>(net: &mut Mlp<T>, grads: &Gradients<T>, lr: T) -> Result<(), DiffError> {
    check_grads(net, grads)?;
    for (l, layer) in net.layers_mut().iter_mut().enumerate() {
        for (p, g) in layer.w.iter_mut().zip(&grads.w[l]) {
            *p = *p - lr * *g;
        }
        for (p, g) in layer.b.iter_mut().zip(&grads.b[l]) {
            *p = *p - lr * *g;
        }
    }
    Ok(())
}

/// Adam with bias correction (beta1 = 0.9, beta2 = 0.999, eps = 1e-8).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Adam<T> {
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
    t: u64,
}

impl<T: FloatT> Adam<T> {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    /// Moment buffers shaped like `net`, flattened as weights-then-bias per
    /// layer to keep the update loop simple.
    pub fn new(net: &Mlp<T>) -> Self {
        let sizes: Vec<usize> = net
            .layers()
            .iter()
            .map(|l| l.w.len() + l.b.len())
            .collect();
        Adam {
            m: sizes.iter().map(|&n| vec![T::zero(); n]).collect(),
            v: sizes.iter().map(|&n| vec![T::zero(); n]).collect(),
            t: 0,
        }
    }

    pub fn step(&mut self, net: &mut Mlp<T>, grads: &Gradients<T>, lr: T) -> Result<(), DiffError> {
        check_grads(net, grads)?;
        if self.m.len() != net.layers().len() {
            return Err(DiffError::ArchMismatch(format!(
                "optimizer built for {} layers, network has {}",
                self.m.len(),
                net.layers().len()
            )));
        }
        self.t += 1;
        let b1 = c::<T>(Self::BETA1);
        let b2 = c::<T>(Self::BETA2);
        let eps = c::<T>(Self::EPS);
        let corr1 = T::one() - c::<T>(Self::BETA1.powi(self.t as i32));
        let corr2 = T::one() - c::<T>(Self::BETA2.powi(self.t as i32));
        for (l, layer) in net.layers_mut().iter_mut().enumerate() {
            let nw = layer.w.len();
            if self.m[l].len() != nw + layer.b.len() {
                return Err(DiffError::ArchMismatch(format!(
                    "optimizer layer {l} sized for {} parameters",
                    self.m[l].len()
                )));
            }
            let (m, v) = (&mut self.m[l], &mut self.v[l]);
            let mut upd = |p: &mut T, g: T, k: usize| {
                m[k] = b1 * m[k] + (T::one() - b1) * g;
                v[k] = b2 * v[k] + (T::one() - b2) * g * g;
                let mhat = m[k] / corr1;
                let vhat = v[k] / corr2;
                *p = *p - lr * mhat / (vhat.sqrt() + eps);
            };
            for (k, (p, g)) in layer.w.iter_mut().zip(&grads.w[l]).enumerate() {
                upd(p, *g, k);
            }
            for (k, (p, g)) in layer.b.iter_mut().zip(&grads.b[l]).enumerate() {
                upd(p, *g, nw + k);
            }
        }
        Ok(())
    }
}

/// Adam for a single scalar parameter (temperature, multipliers).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AdamScalar<T> {
    m: T,
    v: T,
    t: u64,
}

impl<T: FloatT> Default for AdamScalar<T> {
    fn default() -> Self {
        AdamScalar {
            m: T::zero(),
            v: T::zero(),
            t: 0,
        }
    }
}

impl<T: FloatT> AdamScalar<T> {
    pub fn step(&mut self, p: &mut T, g: T, lr: T) {
        if !g.is_finite() {
            return;
        }
        self.t += 1;
        let b1 = c::<T>(Adam::<T>::BETA1);
        let b2 = c::<T>(Adam::<T>::BETA2);
        let eps = c::<T>(Adam::<T>::EPS);
        self.m = b1 * self.m + (T::one() - b1) * g;
        self.v = b2 * self.v + (T::one() - b2) * g * g;
        let mhat = self.m / (T::one() - c::<T>(Adam::<T>::BETA1.powi(self.t as i32)));
        let vhat = self.v / (T::one() - c::<T>(Adam::<T>::BETA2.powi(self.t as i32)));
        *p = *p - lr * mhat / (vhat.sqrt() + eps);
    }
}

/// Soft target update `target <- (1 - tau) * target + tau * online`.
pub fn polyak_update<T: FloatT>(
    target: &mut Mlp<T>,
    online: &Mlp<T>,
    tau: T,
) -> Result<(), DiffError> {
    if target.widths() != online.widths() {
        return Err(DiffError::ArchMismatch(format!(
            "{:?} vs {:?}",
            target.widths(),
            online.widths()
        )));
    }
    let keep = T::one() - tau;
    for (t, o) in target.layers_mut().iter_mut().zip(online.layers()) {
        for (pt, po) in t.w.iter_mut().zip(&o.w) {
            *pt = keep * *pt + tau * *po;
        }
        for (pt, po) in t.b.iter_mut().zip(&o.b) {
            *pt = keep * *pt + tau * *po;
        }
    }
    Ok(())
}

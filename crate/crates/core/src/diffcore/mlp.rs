use rand::Rng;
use serde::{Deserialize, Serialize};

use super::DiffError;
use crate::scalar::{c, FloatT};

/// Element-wise nonlinearity applied after a layer's affine map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Relu,
    Tanh,
    /// No-op; every network's output layer uses this.
    Identity,
}

impl Activation {
    #[inline]
    fn apply<T: FloatT>(self, z: T) -> T {
        match self {
            Activation::Relu => {
                if z > T::zero() {
                    z
                } else {
                    T::zero()
                }
            }
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the post-activation value, which is all
    /// the backward pass stores.
    #[inline]
    fn grad_from_output<T: FloatT>(self, y: T) -> T {
        match self {
            Activation::Relu => {
                if y > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Tanh => T::one() - y * y,
            Activation::Identity => T::one(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct Layer<T> {
    /// Row-major `out_dim x in_dim`.
    pub(crate) w: Vec<T>,
    pub(crate) b: Vec<T>,
    pub(crate) act: Activation,
    pub(crate) in_dim: usize,
    pub(crate) out_dim: usize,
}

/// Fully-connected network. Hidden layers share one nonlinearity kind by
/// default; the output layer is always linear.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Mlp<T> {
    layers: Vec<Layer<T>>,
}

/// Per-layer parameter gradients, same shapes as the network.
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    pub(crate) w: Vec<Vec<T>>,
    pub(crate) b: Vec<Vec<T>>,
}

/// Activations recorded by a forward pass: `acts[0]` is the input, `acts[l+1]`
/// the post-activation output of layer `l`.
#[derive(Debug, Clone)]
pub struct MlpTrace<T> {
    pub(crate) acts: Vec<Vec<T>>,
}

impl<T: FloatT> MlpTrace<T> {
    /// Network output for the traced input.
    pub fn output(&self) -> &[T] {
        self.acts.last().expect("trace holds at least the input")
    }
}

#[inline]
fn dot<T: FloatT>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let n = a.len();
    let quads = n / 4;
    let mut acc = [T::zero(); 4];
    for k in 0..quads {
        let i = 4 * k;
        acc[0] = acc[0] + a[i] * b[i];
        acc[1] = acc[1] + a[i + 1] * b[i + 1];
        acc[2] = acc[2] + a[i + 2] * b[i + 2];
        acc[3] = acc[3] + a[i + 3] * b[i + 3];
    }
    let mut tail = T::zero();
    for i in 4 * quads..n {
        tail = tail + a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

impl<T: FloatT> Mlp<T> {
    /// Build a network with the given layer widths (input first, output
    /// last), `hidden` applied after every layer except the final one.
    /// Weights draw from `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`; biases start
    /// at zero.
    pub fn init<R: Rng + ?Sized>(
        widths: &[usize],
        hidden: Activation,
        rng: &mut R,
    ) -> Result<Self, DiffError> {
        let acts = vec![hidden; widths.len().saturating_sub(2)];
        Self::init_with(widths, &acts, rng)
    }

    /// As [`Mlp::init`] but with one activation per hidden layer.
    pub fn init_with<R: Rng + ?Sized>(
        widths: &[usize],
        hidden_acts: &[Activation],
        rng: &mut R,
    ) -> Result<Self, DiffError> {
        if widths.len() < 2 {
            return Err(DiffError::InvalidArch(format!(
                "need at least input and output widths, got {widths:?}"
            )));
        }
        if widths.iter().any(|&w| w == 0) {
            return Err(DiffError::InvalidArch(format!("zero width in {widths:?}")));
        }
        let n_layers = widths.len() - 1;
        if hidden_acts.len() != n_layers - 1 {
            return Err(DiffError::InvalidArch(format!(
                "{} hidden activations for {} hidden layers",
                hidden_acts.len(),
                n_layers - 1
            )));
        }
        let mut layers = Vec::with_capacity(n_layers);
        for l in 0..n_layers {
            let (in_dim, out_dim) = (widths[l], widths[l + 1]);
            let bound: T = T::one() / c::<T>(in_dim as f64).sqrt();
            let w = (0..in_dim * out_dim)
                .map(|_| rng.random_range(-bound..bound))
                .collect();
            let act = if l + 1 == n_layers {
                Activation::Identity
            } else {
                hidden_acts[l]
            };
            layers.push(Layer {
                w,
                b: vec![T::zero(); out_dim],
                act,
                in_dim,
                out_dim,
            });
        }
        Ok(Mlp { layers })
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().expect("at least one layer").out_dim
    }

    /// Layer widths, input first.
    pub fn widths(&self) -> Vec<usize> {
        let mut v = vec![self.in_dim()];
        v.extend(self.layers.iter().map(|l| l.out_dim));
        v
    }

    fn check_input(&self, x: &[T]) -> Result<(), DiffError> {
        if x.len() != self.in_dim() {
            return Err(DiffError::ShapeMismatch {
                want: self.in_dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Evaluate the network.
    pub fn forward(&self, x: &[T]) -> Result<Vec<T>, DiffError> {
        self.check_input(x)?;
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        for layer in &self.layers {
            next.clear();
            next.reserve(layer.out_dim);
            for i in 0..layer.out_dim {
                let row = &layer.w[i * layer.in_dim..(i + 1) * layer.in_dim];
                next.push(layer.act.apply(layer.b[i] + dot(row, &cur)));
            }
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(cur)
    }

    /// Evaluate and keep every intermediate activation for a later backward
    /// pass.
    pub fn trace(&self, x: &[T]) -> Result<MlpTrace<T>, DiffError> {
        self.check_input(x)?;
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_vec());
        for layer in &self.layers {
            let cur = acts.last().expect("non-empty");
            let mut out = Vec::with_capacity(layer.out_dim);
            for i in 0..layer.out_dim {
                let row = &layer.w[i * layer.in_dim..(i + 1) * layer.in_dim];
                out.push(layer.act.apply(layer.b[i] + dot(row, cur)));
            }
            acts.push(out);
        }
        Ok(MlpTrace { acts })
    }

    /// Reverse-mode gradients for one traced sample. Parameter gradients are
    /// accumulated into `grads`; the returned vector is the gradient with
    /// respect to the input.
    pub fn backward_trace(
        &self,
        trace: &MlpTrace<T>,
        output_grad: &[T],
        grads: &mut Gradients<T>,
    ) -> Result<Vec<T>, DiffError> {
        if output_grad.len() != self.out_dim() {
            return Err(DiffError::ShapeMismatch {
                want: self.out_dim(),
                got: output_grad.len(),
            });
        }
        if trace.acts.len() != self.layers.len() + 1 {
            return Err(DiffError::GradShapeMismatch(format!(
                "trace has {} records for {} layers",
                trace.acts.len(),
                self.layers.len()
            )));
        }
        if grads.w.len() != self.layers.len() {
            return Err(DiffError::GradShapeMismatch(format!(
                "gradient holds {} layers, network has {}",
                grads.w.len(),
                self.layers.len()
            )));
        }
        let mut dy = output_grad.to_vec();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let x = &trace.acts[l];
            let y = &trace.acts[l + 1];
            // dz = dy ⊙ act'(z), with act' computed from the stored output.
            let mut dz = dy;
            for i in 0..layer.out_dim {
                dz[i] = dz[i] * layer.act.grad_from_output(y[i]);
            }
            let (gw, gb) = (&mut grads.w[l], &mut grads.b[l]);
            for i in 0..layer.out_dim {
                let di = dz[i];
                gb[i] += di;
                let grow = &mut gw[i * layer.in_dim..(i + 1) * layer.in_dim];
                for j in 0..layer.in_dim {
                    grow[j] = grow[j] + di * x[j];
                }
            }
            // dx = W^T dz
            let mut dx = vec![T::zero(); layer.in_dim];
            for i in 0..layer.out_dim {
                let di = dz[i];
                let row = &layer.w[i * layer.in_dim..(i + 1) * layer.in_dim];
                for j in 0..layer.in_dim {
                    dx[j] = dx[j] + di * row[j];
                }
            }
            dy = dx;
        }
        Ok(dy)
    }

    /// One-shot forward + backward for a single sample. Returns parameter
    /// gradients and the input gradient.
    pub fn backward(
        &self,
        x: &[T],
        output_grad: &[T],
    ) -> Result<(Gradients<T>, Vec<T>), DiffError> {
        let trace = self.trace(x)?;
        let mut grads = self.zero_gradients();
        let dx = self.backward_trace(&trace, output_grad, &mut grads)?;
        Ok((grads, dx))
    }

    /// Gradient of the network output with respect to its input only; the
    /// cheap path when parameter gradients are not needed.
    pub fn input_grad(&self, trace: &MlpTrace<T>, output_grad: &[T]) -> Result<Vec<T>, DiffError> {
        if output_grad.len() != self.out_dim() {
            return Err(DiffError::ShapeMismatch {
                want: self.out_dim(),
                got: output_grad.len(),
            });
        }
        let mut dy = output_grad.to_vec();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let y = &trace.acts[l + 1];
            let mut dx = vec![T::zero(); layer.in_dim];
            for i in 0..layer.out_dim {
                let di = dy[i] * layer.act.grad_from_output(y[i]);
                let row = &layer.w[i * layer.in_dim..(i + 1) * layer.in_dim];
                for j in 0..layer.in_dim {
                    dx[j] = dx[j] + di * row[j];
                }
            }
            dy = dx;
        }
        Ok(dy)
    }

    /// Zero-filled gradients matching this network's shapes.
    pub fn zero_gradients(&self) -> Gradients<T> {
        Gradients {
            w: self
                .layers
                .iter()
                .map(|l| vec![T::zero(); l.w.len()])
                .collect(),
            b: self
                .layers
                .iter()
                .map(|l| vec![T::zero(); l.b.len()])
                .collect(),
        }
    }

    pub(crate) fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    /// Flat view of all parameters, weights then bias per layer. Used by
    /// tests that perturb single parameters.
    pub fn flat_params(&self) -> Vec<T> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend_from_slice(&l.w);
            out.extend_from_slice(&l.b);
        }
        out
    }

    /// Inverse of [`Mlp::flat_params`].
    pub fn set_flat_params(&mut self, flat: &[T]) -> Result<(), DiffError> {
        let want: usize = self.layers.iter().map(|l| l.w.len() + l.b.len()).sum();
        if flat.len() != want {
            return Err(DiffError::ShapeMismatch {
                want,
                got: flat.len(),
            });
        }
        let mut k = 0;
        for l in &mut self.layers {
            let nw = l.w.len();
            l.w.copy_from_slice(&flat[k..k + nw]);
            k += nw;
            let nb = l.b.len();
            l.b.copy_from_slice(&flat[k..k + nb]);
            k += nb;
        }
        Ok(())
    }

    /// Overwrite one layer's parameters; used by tests and by policy-head
    /// construction that pins a bias.
    pub fn set_layer(&mut self, layer: usize, w: &[T], b: &[T]) -> Result<(), DiffError> {
        let l = &mut self.layers[layer];
        if w.len() != l.w.len() || b.len() != l.b.len() {
            return Err(DiffError::GradShapeMismatch(format!(
                "layer {layer} expects {}x{} weights",
                l.out_dim, l.in_dim
            )));
        }
        l.w.copy_from_slice(w);
        l.b.copy_from_slice(b);
        Ok(())
    }

    /// Add `delta` to one output bias; used to shift a head's initial output.
    pub fn nudge_output_bias(&mut self, index: usize, delta: T) {
        let last = self.layers.last_mut().expect("at least one layer");
        last.b[index] += delta;
    }
}

impl<T: FloatT> Gradients<T> {
    pub fn scale(&mut self, s: T) {
        for g in self.w.iter_mut().chain(self.b.iter_mut()) {
            for v in g.iter_mut() {
                *v *= s;
            }
        }
    }

    pub fn add_scaled(&mut self, other: &Gradients<T>, s: T) {
        for (a, b) in self.w.iter_mut().zip(&other.w) {
            for (x, y) in a.iter_mut().zip(b) {
                *x = *x + s * *y;
            }
        }
        for (a, b) in self.b.iter_mut().zip(&other.b) {
            for (x, y) in a.iter_mut().zip(b) {
                *x = *x + s * *y;
            }
        }
    }

    pub fn zero(&mut self) {
        for g in self.w.iter_mut().chain(self.b.iter_mut()) {
            for v in g.iter_mut() {
                *v = T::zero();
            }
        }
    }

    /// Flat view matching [`Mlp::flat_params`] ordering.
    pub fn flat(&self) -> Vec<T> {
        let mut out = Vec::new();
        for l in 0..self.w.len() {
            out.extend_from_slice(&self.w[l]);
            out.extend_from_slice(&self.b[l]);
        }
        out
    }

    /// First non-finite entry as `(layer, index)`, if any.
    pub(crate) fn find_non_finite(&self) -> Option<(usize, usize)> {
        for l in 0..self.w.len() {
            if let Some(i) = self.w[l].iter().position(|v| !v.is_finite()) {
                return Some((l, i));
            }
            if let Some(i) = self.b[l].iter().position(|v| !v.is_finite()) {
                return Some((l, self.w[l].len() + i));
            }
        }
        None
    }
}

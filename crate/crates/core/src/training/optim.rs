//! Adam and gradient clipping.

use crate::scalar::{sc, Scalar};
use crate::tensor::ParamStore;

#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: ParamStore<T>,
    v: ParamStore<T>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(params: &ParamStore<T>, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Adam {
            lr,
            beta1,
            beta2,
            eps,
            step: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One bias-corrected update.
    pub fn update(&mut self, params: &mut ParamStore<T>, grads: &ParamStore<T>) {
        self.step += 1;
        let t = self.step as i32;
        let b1: T = sc(self.beta1);
        let b2: T = sc(self.beta2);
        let c1: T = sc(1.0 - self.beta1.powi(t));
        let c2: T = sc(1.0 - self.beta2.powi(t));
        let lr: T = sc(self.lr);
        let eps: T = sc(self.eps);
        let one = T::one();
        let tensors = params.tensors_mut().iter_mut();
        let moments = self.m.tensors_mut().iter_mut().zip(self.v.tensors_mut().iter_mut());
        for ((p, g), (m, v)) in tensors.zip(grads.tensors()).zip(moments) {
            for i in 0..p.data.len() {
                let gi = g.data[i];
                m.data[i] = b1 * m.data[i] + (one - b1) * gi;
                v.data[i] = b2 * v.data[i] + (one - b2) * gi * gi;
                let mh = m.data[i] / c1;
                let vh = v.data[i] / c2;
                p.data[i] -= lr * mh / (vh.sqrt() + eps);
            }
        }
    }
}

/// Rescales `grads` so its global norm is at most `max_norm`; returns the
/// norm before clipping.
pub fn clip_grad_norm<T: Scalar>(grads: &mut ParamStore<T>, max_norm: f64) -> f64 {
    let norm = grads.global_norm().to_f64_lossy();
    if norm > max_norm && norm > 0.0 {
        grads.scale(sc(max_norm / norm));
    }
    norm
}

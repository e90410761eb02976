use alloc::vec;
use alloc::vec::Vec;

use super::params::ParamStore;
use crate::math;

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, step: 0, m: Vec::new(), v: Vec::new() }
    }

    pub fn steps(&self) -> i32 {
        self.step
    }

    /// Updates every trainable tensor that has a gradient, then leaves the
    /// gradients in place (call [`ParamStore::zero_grad`] before the next pass).
    pub fn step(&mut self, params: &mut ParamStore) {
        if self.m.len() != params.len() {
            self.m = params.iter().map(|(_, t)| vec![0.0; t.numel()]).collect();
            self.v = self.m.clone();
        }
        self.step += 1;
        let bc1 = 1.0 - math::powi(self.beta1, self.step);
        let bc2 = 1.0 - math::powi(self.beta2, self.step);
        for id in params.ids().collect::<Vec<_>>() {
            let t = params.get_mut(id);
            if !t.requires_grad() {
                continue;
            }
            let Some(grad) = t.grad().map(|g| g.to_vec()) else { continue };
            let (m, v) = (&mut self.m[id.0], &mut self.v[id.0]);
            for (i, w) in t.data_mut().iter_mut().enumerate() {
                let gi = grad[i];
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * gi;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * gi * gi;
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                *w -= self.lr * mhat / (math::sqrt(vhat) + self.eps);
            }
        }
    }
}

//! Adam with a separate learning rate for embedding tables.

use serde::{Deserialize, Serialize};

use crate::numerics::{Matrix, ParamWithGrad, Real};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    /// Smaller rate for the sparse tables.
    pub embedding_lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            embedding_lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment state per parameter, laid out in the stable walk
/// order of the parameter list.
pub struct Adam<T: Real> {
    config: AdamConfig,
    m: Vec<Matrix<T>>,
    v: Vec<Matrix<T>>,
    step: u64,
}

impl<T: Real> Adam<T> {
    pub fn new(config: AdamConfig) -> Self {
        Adam {
            config,
            m: Vec::new(),
            v: Vec::new(),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One update over the full parameter list; gradients are left untouched
    /// so callers decide when to zero them.
    pub fn step(&mut self, params: &mut [&mut ParamWithGrad<T>]) {
        if self.m.is_empty() {
            self.m = params
                .iter()
                .map(|p| Matrix::zeros(p.value.rows(), p.value.cols()))
                .collect();
            self.v = self.m.clone();
        }
        assert_eq!(self.m.len(), params.len(), "parameter list changed shape");
        self.step += 1;
        let t = self.step as i32;
        let b1 = T::from_f64(self.config.beta1);
        let b2 = T::from_f64(self.config.beta2);
        let one = T::ONE;
        let eps = T::from_f64(self.config.eps);
        let bc1 = T::from_f64(1.0 - self.config.beta1.powi(t));
        let bc2 = T::from_f64(1.0 - self.config.beta2.powi(t));
        for (i, p) in params.iter_mut().enumerate() {
            let lr = if p.is_embedding() {
                T::from_f64(self.config.embedding_lr)
            } else {
                T::from_f64(self.config.lr)
            };
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            let value = p.value.data_mut();
            let grad = p.grad.data();
            for j in 0..value.len() {
                let g = grad[j];
                m[j] = b1 * m[j] + (one - b1) * g;
                v[j] = b2 * v[j] + (one - b2) * g * g;
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                value[j] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

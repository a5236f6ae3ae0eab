use alloc::vec::Vec;

use super::params::ParamStore;
use super::Tensor;
use crate::math::{powf, sqrt};

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
    Sgd { momentum: f64 },
}

impl OptimizerKind {
    /// β1 = 0.9, β2 = 0.999, ε = 1e-8.
    pub fn adam() -> Self {
        Self::Adam {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn sgd() -> Self {
        Self::Sgd { momentum: 0.0 }
    }
}

/// Optimizer with its per-parameter moment buffers.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    kind: OptimizerKind,
    learning_rate: f64,
    step_count: u64,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, learning_rate: f64) -> Self {
        Self {
            kind,
            learning_rate,
            step_count: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn adam(learning_rate: f64) -> Self {
        Self::new(OptimizerKind::adam(), learning_rate)
    }

    pub fn sgd(learning_rate: f64) -> Self {
        Self::new(OptimizerKind::sgd(), learning_rate)
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// Applies one update from the accumulated gradients, then zeroes them.
    pub fn step(&mut self, store: &mut ParamStore) {
        if self.first.len() != store.len() {
            self.first = store
                .iter()
                .map(|(_, p)| Tensor::zeros(p.value().rows(), p.value().cols()))
                .collect();
            self.second = self.first.clone();
        }
        self.step_count += 1;
        let lr = self.learning_rate;
        match self.kind {
            OptimizerKind::Sgd { momentum } => {
                for (p, v) in store.params_mut().iter_mut().zip(&mut self.first) {
                    let (value, grad) = ParamStore::split_mut(p);
                    for ((x, g), m) in value.data_mut().iter_mut().zip(grad.data()).zip(v.data_mut()) {
                        *m = momentum * *m + g;
                        *x -= lr * *m;
                    }
                }
            }
            OptimizerKind::Adam { beta1, beta2, epsilon } => {
                let t = self.step_count as f64;
                let c1 = 1.0 - powf(beta1, t);
                let c2 = 1.0 - powf(beta2, t);
                for ((p, m), v) in store.params_mut().iter_mut().zip(&mut self.first).zip(&mut self.second) {
                    let (value, grad) = ParamStore::split_mut(p);
                    for (((x, &g), m), v) in value
                        .data_mut()
                        .iter_mut()
                        .zip(grad.data())
                        .zip(m.data_mut())
                        .zip(v.data_mut())
                    {
                        *m = beta1 * *m + (1.0 - beta1) * g;
                        *v = beta2 * *v + (1.0 - beta2) * g * g;
                        let m_hat = *m / c1;
                        let v_hat = *v / c2;
                        *x -= lr * m_hat / (sqrt(v_hat) + epsilon);
                    }
                }
            }
        }
        store.zero_grad();
    }
}

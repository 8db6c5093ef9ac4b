//! Adaptive-moment optimizer with the usual defaults (beta1 0.9, beta2
//! 0.999, eps 1e-8). Frozen parameters are skipped; the learning rate is
//! supplied per step so schedules live with the trainer.

use crate::params::ParamStore;
use crate::tensor::Tensor;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct Adam {
    pub step: u64,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
}

impl Adam {
    pub fn new(store: &ParamStore) -> Self {
        Adam {
            step: 0,
            m: store
                .entries()
                .iter()
                .map(|e| Tensor::zeros(e.value.shape()))
                .collect(),
            v: store
                .entries()
                .iter()
                .map(|e| Tensor::zeros(e.value.shape()))
                .collect(),
        }
    }

    /// Restores optimizer state from a checkpoint.
    pub fn from_state(step: u64, m: Vec<Tensor>, v: Vec<Tensor>) -> Self {
        Adam { step, m, v }
    }

    /// One update over all trainable parameters; `grads` is indexed by
    /// parameter id, `None` meaning zero gradient.
    pub fn apply(&mut self, store: &mut ParamStore, grads: &[Option<Tensor>], lr: f64) {
        self.step += 1;
        let t = self.step as f64;
        let bc1 = 1.0 - ADAM_BETA1.powf(t);
        let bc2 = 1.0 - ADAM_BETA2.powf(t);
        for idx in 0..store.len() {
            if !store.entry(idx).trainable {
                continue;
            }
            let m = self.m[idx].data_mut();
            let v = self.v[idx].data_mut();
            let zero;
            let g = match &grads[idx] {
                Some(g) => g.data(),
                None => {
                    zero = vec![0.0; m.len()];
                    &zero
                }
            };
            let p = store.entry_mut(idx).value.data_mut();
            for i in 0..p.len() {
                m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g[i];
                v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g[i] * g[i];
                let mh = m[i] / bc1;
                let vh = v[i] / bc2;
                p[i] -= lr * mh / (vh.sqrt() + ADAM_EPS);
            }
        }
    }
}

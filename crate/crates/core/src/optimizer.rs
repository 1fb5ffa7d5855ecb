//! Adam optimizer for local client training.
//!
//! Standard Adam recurrence with bias correction:
//! `m ← β₁m + (1−β₁)g`, `v ← β₂v + (1−β₂)g²`, `m̂ = m/(1−β₁ᵗ)`,
//! `v̂ = v/(1−β₂ᵗ)`, `p ← p − lr·m̂/(√v̂ + eps)`. No schedules, weight decay
//! or clipping.

use serde::{Deserialize, Serialize};

use crate::error::NumericsError;
use crate::params::ParamStore;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Completed steps; moments are all-zero at `t = 0`.
    pub t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamState {
    /// Fresh state for `n` scalar parameters at the default learning rate.
    pub fn new(n: usize) -> Self {
        Self::with_lr(n, 0.001)
    }

    pub fn with_lr(n: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    /// Drop moments and the step counter, keeping hyperparameters.
    pub fn reset(&mut self) {
        self.t = 0;
        self.m.fill(0.0);
        self.v.fill(0.0);
    }

    /// One update over flat parameter and gradient vectors.
    pub fn step_flat(&mut self, params: &mut [f64], grads: &[f64]) -> Result<(), NumericsError> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(NumericsError::InvalidArgument(format!(
                "adam state sized for {} parameters, got {} params / {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}

/// Apply one Adam step to a store using its accumulated gradient slots.
pub fn adam_step(store: &mut ParamStore, state: &mut AdamState) -> Result<(), NumericsError> {
    let mut flat = store.flatten();
    let grads = store.flatten_grads();
    state.step_flat(&mut flat, &grads)?;
    store.unflatten(&flat)
}

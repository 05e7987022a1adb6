//! ADAM with bias correction.

use serde::{Deserialize, Serialize};

use super::{ModelError, Parameters, PARAM_TENSORS};

/// Optimizer hyperparameters. The defaults are the published training
/// settings: learning rate 0.001 with eps 1e-7.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamHyper {
    pub lr: f64,
    pub eps: f64,
    pub beta1: f64,
    pub beta2: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self {
            lr: 0.001,
            eps: 1e-7,
            beta1: 0.9,
            beta2: 0.999,
        }
    }
}

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Parameters,
    pub v: Parameters,
    pub step: u64,
}

impl AdamState {
    pub fn new(params: &Parameters) -> Self {
        Self {
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
        }
    }
}

/// One ADAM update:
///
///   m ← β₁m + (1−β₁)g,  v ← β₂v + (1−β₂)g²,
///   θ ← θ − lr · m̂ / (√v̂ + eps)  with  m̂ = m/(1−β₁ᵗ),  v̂ = v/(1−β₂ᵗ).
pub fn adam_step(
    params: &mut Parameters,
    grads: &Parameters,
    state: &mut AdamState,
    hyper: &AdamHyper,
) -> Result<(), ModelError> {
    grads.assert_finite()?;
    state.step += 1;
    let t = state.step as i32;
    let m_correction = 1.0 - hyper.beta1.powi(t);
    let v_correction = 1.0 - hyper.beta2.powi(t);

    for name in PARAM_TENSORS {
        let g = grads.slice(name);
        let m = state.m.slice_mut(name);
        for (mi, &gi) in m.iter_mut().zip(g) {
            *mi = hyper.beta1 * *mi + (1.0 - hyper.beta1) * gi;
        }
        let v = state.v.slice_mut(name);
        for (vi, &gi) in v.iter_mut().zip(g) {
            *vi = hyper.beta2 * *vi + (1.0 - hyper.beta2) * gi * gi;
        }
        let m = state.m.slice(name);
        let v = state.v.slice(name);
        let p = params.slice_mut(name);
        for ((pi, &mi), &vi) in p.iter_mut().zip(m).zip(v) {
            let m_hat = mi / m_correction;
            let v_hat = vi / v_correction;
            *pi -= hyper.lr * m_hat / (v_hat.sqrt() + hyper.eps);
        }
    }
    params.assert_finite()
}

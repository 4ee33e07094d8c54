use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Params, PARAM_NAMES};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moments for every parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first: Vec<Vec<f64>>,
    pub second: Vec<Vec<f64>>,
    pub step: u64,
}

impl AdamState {
    pub fn new(params: &Params) -> Self {
        let zeros: Vec<Vec<f64>> = params.tensors().iter().map(|t| vec![0.0; t.data.len()]).collect();
        Self {
            first: zeros.clone(),
            second: zeros,
            step: 0,
        }
    }
}

/// One bias-corrected Adam update. Parameters are left untouched when an
/// update would be non-finite.
pub fn adam_step(params: &mut Params, grads: &Params, state: &mut AdamState, config: &AdamConfig) -> Result<()> {
    let step = state.step + 1;
    let c1 = 1.0 - config.beta1.powi(step as i32);
    let c2 = 1.0 - config.beta2.powi(step as i32);

    for (k, g) in grads.tensors().iter().enumerate() {
        let m = &state.first[k];
        let v = &state.second[k];
        if m.len() != g.data.len() {
            return Err(Error::Invalid(format!("gradient shape mismatch for {}", PARAM_NAMES[k])));
        }
        let bad = g.data.iter().zip(m.iter().zip(v)).any(|(gi, (mi, vi))| {
            let m1 = config.beta1 * mi + (1.0 - config.beta1) * gi;
            let v1 = config.beta2 * vi + (1.0 - config.beta2) * gi * gi;
            !(m1 / c1 / ((v1 / c2).sqrt() + config.eps)).is_finite()
        });
        if bad {
            return Err(Error::NonFinite(format!("Adam update of {}", PARAM_NAMES[k])));
        }
    }

    for (k, (p, g)) in params.tensors_mut().into_iter().zip(grads.tensors()).enumerate() {
        let m = &mut state.first[k];
        let v = &mut state.second[k];
        for ((theta, gi), (mi, vi)) in p.data.iter_mut().zip(&g.data).zip(m.iter_mut().zip(v.iter_mut())) {
            *mi = config.beta1 * *mi + (1.0 - config.beta1) * gi;
            *vi = config.beta2 * *vi + (1.0 - config.beta2) * gi * gi;
            let m_hat = *mi / c1;
            let v_hat = *vi / c2;
            *theta -= config.learning_rate * m_hat / (v_hat.sqrt() + config.eps);
        }
    }
    state.step = step;
    Ok(())
}

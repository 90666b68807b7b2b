use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::ParamStore;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub epsilon: f32,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First and second moment estimates per parameter.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AdamState {
    step: i32,
    moments: BTreeMap<String, (Vec<f32>, Vec<f32>)>,
}

impl AdamState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn steps_taken(&self) -> i32 {
        self.step
    }
}

/// One bias-corrected Adam update of every parameter in `params`.
pub fn adam_step(
    params: &mut ParamStore,
    grads: &BTreeMap<String, Tensor>,
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<()> {
    for (name, p) in params.iter() {
        match grads.get(name) {
            Some(g) if g.shape() == p.shape() => {}
            Some(g) => {
                return Err(Error::Contract(format!(
                    "gradient for {name} has shape {:?}, parameter {:?}",
                    g.shape(),
                    p.shape()
                )))
            }
            None => return Err(Error::Contract(format!("missing gradient for {name}"))),
        }
    }
    state.step += 1;
    let bc1 = 1.0 - cfg.beta1.powi(state.step);
    let bc2 = 1.0 - cfg.beta2.powi(state.step);
    for (name, p) in params.iter_mut() {
        let g = grads[name].data();
        let (m, v) = state
            .moments
            .entry(name.clone())
            .or_insert_with(|| (vec![0.0; g.len()], vec![0.0; g.len()]));
        for (((w, &gi), mi), vi) in p.data_mut().iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
            *mi = cfg.beta1 * *mi + (1.0 - cfg.beta1) * gi;
            *vi = cfg.beta2 * *vi + (1.0 - cfg.beta2) * gi * gi;
            let m_hat = *mi / bc1;
            let v_hat = *vi / bc2;
            *w -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
        }
    }
    Ok(())
}

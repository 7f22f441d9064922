use serde::{Deserialize, Serialize};

use crate::engine::params::ParameterSet;

/// Adam hyper-parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Parameters plus optimizer and early-stopping bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub params: ParameterSet,
    pub first_moment: ParameterSet,
    pub second_moment: ParameterSet,
    pub step: u64,
    pub best_val_mse: f64,
    pub epochs_since_improvement: usize,
    pub seed: u64,
}

impl TrainState {
    pub fn new(params: ParameterSet, seed: u64) -> Self {
        Self {
            first_moment: params.zeros_like(),
            second_moment: params.zeros_like(),
            params,
            step: 0,
            best_val_mse: f64::INFINITY,
            epochs_since_improvement: 0,
            seed,
        }
    }
}

/// One bias-corrected Adam update of every array.
pub fn adam_step(state: &mut TrainState, grads: &ParameterSet, cfg: &AdamConfig) {
    assert!(state.params.same_layout(grads), "gradient layout differs from parameters");
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    let arrays = state
        .params
        .iter_mut()
        .zip(state.first_moment.iter_mut())
        .zip(state.second_moment.iter_mut())
        .zip(grads.iter());
    for (((p, m), v), g) in arrays {
        for i in 0..p.values.len() {
            let gi = g.values[i];
            m.values[i] = cfg.beta1 * m.values[i] + (1.0 - cfg.beta1) * gi;
            v.values[i] = cfg.beta2 * v.values[i] + (1.0 - cfg.beta2) * gi * gi;
            let m_hat = m.values[i] / c1;
            let v_hat = v.values[i] / c2;
            p.values[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
}

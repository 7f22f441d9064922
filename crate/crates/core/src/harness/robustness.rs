use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{inject_impulse_noise, NoiseSpec, Windows};
use crate::engine::{scaled_forecast_errors, Forecaster, ParameterSet};
use crate::error::Result;
use crate::objective::posterior_sequence_kl;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessResult {
    pub mse_clean: f64,
    pub mae_clean: f64,
    pub mse_noisy: f64,
    pub mae_noisy: f64,
    /// `(noisy - clean) / clean * 100`; absent when the clean error is zero.
    pub degradation_pct: Option<f64>,
    /// Mean over windows of the step-averaged posterior divergence
    /// `KL(noisy || clean)`; absent for models without a posterior.
    pub invariance_kl: Option<f64>,
    pub impulses: usize,
}

pub fn degradation_pct(clean: f64, noisy: f64) -> Option<f64> {
    (clean != 0.0).then(|| (noisy - clean) / clean * 100.0)
}

/// Scores the same trained parameters on clean and impulse-corrupted copies
/// of the same windows. `error_scale` optionally rescales errors per channel
/// as in [`scaled_forecast_errors`].
pub fn robustness_eval(
    model: &dyn Forecaster,
    params: &ParameterSet,
    windows: &Windows,
    noise: &NoiseSpec,
    channel_std: &[f64],
    error_scale: Option<&[f64]>,
) -> Result<RobustnessResult> {
    let (noisy, mask) = inject_impulse_noise(windows, model.lookback(), noise, channel_std)?;
    let (mse_clean, mae_clean) = scaled_forecast_errors(model, params, windows, error_scale)?;
    let (mse_noisy, mae_noisy) = scaled_forecast_errors(model, params, &noisy, error_scale)?;
    let kls: Vec<Option<f64>> = (0..windows.len())
        .into_par_iter()
        .map(|i| {
            let clean = model.posterior(params, windows.get(i))?;
            let pert = model.posterior(params, noisy.get(i))?;
            match (clean, pert) {
                (Some(c), Some(p)) => Ok(Some(posterior_sequence_kl(
                    &p.mu,
                    p.log_sigma.as_deref(),
                    &c.mu,
                    c.log_sigma.as_deref(),
                    c.dim,
                )?)),
                _ => Ok(None),
            }
        })
        .collect::<Result<_>>()?;
    let invariance_kl = kls
        .iter()
        .copied()
        .collect::<Option<Vec<f64>>>()
        .filter(|v| !v.is_empty())
        .map(|v| v.iter().sum::<f64>() / v.len() as f64);
    Ok(RobustnessResult {
        mse_clean,
        mae_clean,
        mse_noisy,
        mae_noisy,
        degradation_pct: degradation_pct(mse_clean, mse_noisy),
        invariance_kl,
        impulses: mask.count(),
    })
}

//! Parameters, exact gradients, optimization and gradient verification.

use rayon::prelude::*;

use crate::data::windows::Windows;
use crate::error::{Error, Result};
use crate::objective::LossBreakdown;

pub mod adam;
pub(crate) mod backprop;
pub mod checkpoint;
pub mod gradcheck;
pub mod linear;
pub mod model;
pub mod params;
pub mod train;

pub use adam::{adam_step, AdamConfig, TrainState};
pub use checkpoint::Checkpoint;
pub use gradcheck::{grad_check, small_model_check, GradCheckOptions, GradCheckReport};
pub use linear::LinearForecaster;
pub use model::{Forecaster, ModelSpec, MpsSsm, Objective, Posterior};
pub use params::{Param, ParameterSet};
pub use train::{train, EpochRecord, TrainConfig, TrainOutcome};

/// Mean loss and exact gradient over the windows at `batch`.
///
/// `noise` holds `model.noise_len()` draws per batch entry, in batch order;
/// pass an empty slice for mean-path evaluation. Per-window gradients are
/// computed in parallel and summed in batch order.
pub fn gradients(
    model: &dyn Forecaster,
    params: &ParameterSet,
    windows: &Windows,
    batch: &[usize],
    obj: &Objective,
    noise: &[f64],
) -> Result<(LossBreakdown, ParameterSet)> {
    if batch.is_empty() {
        return Err(Error::config("batch_size", "empty batch"));
    }
    let nl = model.noise_len();
    let sampled = !noise.is_empty();
    if sampled && noise.len() != nl * batch.len() {
        return Err(Error::dim("batch noise", nl * batch.len(), noise.len()));
    }
    let scale = 1.0 / batch.len() as f64;
    let parts: Vec<(LossBreakdown, ParameterSet)> = batch
        .par_iter()
        .enumerate()
        .map(|(slot, &wi)| {
            let mut g = params.zeros_like();
            let n = sampled.then(|| &noise[slot * nl..(slot + 1) * nl]);
            let loss = model.loss_and_grad(params, windows.get(wi), obj, n, scale, &mut g)?;
            Ok((loss, g))
        })
        .collect::<Result<_>>()?;
    let mut grad = params.zeros_like();
    let mut losses = Vec::with_capacity(parts.len());
    for (loss, g) in &parts {
        grad.add_assign(g);
        losses.push(*loss);
    }
    let loss = LossBreakdown::mean(&losses);
    if !loss.total.is_finite() {
        let array = grad
            .first_non_finite()
            .map_or_else(|| "loss".to_string(), str::to_string);
        return Err(Error::NonFinite { array });
    }
    if let Some(name) = grad.first_non_finite() {
        return Err(Error::NonFinite {
            array: name.to_string(),
        });
    }
    Ok((loss, grad))
}

/// Mean loss over all windows on the posterior-mean path.
pub fn mean_loss(
    model: &dyn Forecaster,
    params: &ParameterSet,
    windows: &Windows,
    obj: &Objective,
) -> Result<LossBreakdown> {
    let losses: Vec<LossBreakdown> = (0..windows.len())
        .into_par_iter()
        .map(|i| model.loss(params, windows.get(i), obj, None))
        .collect::<Result<_>>()?;
    Ok(LossBreakdown::mean(&losses))
}

/// Mean-path forecasts for every window, `len x horizon x targets`.
pub fn forecasts(model: &dyn Forecaster, params: &ParameterSet, windows: &Windows) -> Result<Vec<Vec<f64>>> {
    (0..windows.len())
        .into_par_iter()
        .map(|i| model.forecast(params, windows.get(i)))
        .collect()
}

/// `(MSE, MAE)` of the full-lookback forecast over horizon steps and target
/// channels of every window.
pub fn forecast_errors(model: &dyn Forecaster, params: &ParameterSet, windows: &Windows) -> Result<(f64, f64)> {
    scaled_forecast_errors(model, params, windows, None)
}

/// [`forecast_errors`] with each channel's error multiplied by `scale[ch]`,
/// e.g. the normalization standard deviations to report original units.
pub fn scaled_forecast_errors(
    model: &dyn Forecaster,
    params: &ParameterSet,
    windows: &Windows,
    scale: Option<&[f64]>,
) -> Result<(f64, f64)> {
    if let Some(s) = scale {
        if s.len() != windows.channels() {
            return Err(Error::dim("error scale", windows.channels(), s.len()));
        }
    }
    if windows.is_empty() {
        return Err(Error::Data("no windows to evaluate".into()));
    }
    let preds = forecasts(model, params, windows)?;
    let (t, m) = (model.lookback(), windows.channels());
    let targets = model.targets();
    let (mut se, mut ae, mut n) = (0.0, 0.0, 0usize);
    for (i, pred) in preds.iter().enumerate() {
        let w = windows.get(i);
        for step in 0..model.horizon() {
            for (c, &ch) in targets.iter().enumerate() {
                let diff = (pred[step * targets.len() + c] - w[(t + step) * m + ch]) * scale.map_or(1.0, |s| s[ch]);
                se += diff * diff;
                ae += diff.abs();
                n += 1;
            }
        }
    }
    Ok((se / n as f64, ae / n as f64))
}

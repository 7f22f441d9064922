use serde::{Deserialize, Serialize};

use crate::data::Windows;
use crate::engine::{forecast_errors, Forecaster, ParameterSet};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    Failed { reason: String },
}

/// Scores of one trained run. Errors are on the normalized scale unless the
/// experiment asks for original units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub dataset: String,
    pub lookback: usize,
    pub horizon: usize,
    pub lambda: f64,
    pub variant: String,
    pub seed: u64,
    pub status: RunStatus,
    pub epochs: usize,
    pub val_mse: Option<f64>,
    pub mse_clean: Option<f64>,
    pub mae_clean: Option<f64>,
    pub mse_noisy: Option<f64>,
    pub mae_noisy: Option<f64>,
    pub degradation_pct: Option<f64>,
    pub invariance_kl: Option<f64>,
    /// Training-split loss terms at the returned parameters (mean path).
    pub loss_pred: Option<f64>,
    pub loss_min: Option<f64>,
    pub wall_secs: Option<f64>,
}

impl MetricsRecord {
    pub fn new(dataset: &str, lookback: usize, horizon: usize, lambda: f64, variant: &str, seed: u64) -> Self {
        Self {
            dataset: dataset.to_string(),
            lookback,
            horizon,
            lambda,
            variant: variant.to_string(),
            seed,
            status: RunStatus::Ok,
            epochs: 0,
            val_mse: None,
            mse_clean: None,
            mae_clean: None,
            mse_noisy: None,
            mae_noisy: None,
            degradation_pct: None,
            invariance_kl: None,
            loss_pred: None,
            loss_min: None,
            wall_secs: None,
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == RunStatus::Ok
    }
}

/// `(MSE, MAE)` between equally long prediction and truth vectors.
pub fn error_metrics(pred: &[f64], truth: &[f64]) -> Result<(f64, f64)> {
    if pred.len() != truth.len() {
        return Err(Error::dim("predictions", truth.len(), pred.len()));
    }
    if pred.is_empty() {
        return Err(Error::Data("nothing to evaluate".into()));
    }
    let n = pred.len() as f64;
    let mse = pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / n;
    let mae = pred.iter().zip(truth).map(|(p, t)| (p - t).abs()).sum::<f64>() / n;
    Ok((mse, mae))
}

/// Scores the full-lookback mean-path forecast of every window.
pub fn evaluate(model: &dyn Forecaster, params: &ParameterSet, windows: &Windows) -> Result<(f64, f64)> {
    forecast_errors(model, params, windows)
}

/// Forecasts every horizon step as the last observed input value.
pub fn persistence_baseline(windows: &Windows, lookback: usize, targets: &[usize]) -> Result<(f64, f64)> {
    if windows.is_empty() {
        return Err(Error::Data("no windows to evaluate".into()));
    }
    if lookback == 0 || lookback >= windows.rows() {
        return Err(Error::dim("lookback", windows.rows() - 1, lookback));
    }
    let m = windows.channels();
    let horizon = windows.rows() - lookback;
    let mut pred = Vec::new();
    let mut truth = Vec::new();
    for w in windows.iter() {
        for i in 0..horizon {
            for &c in targets {
                pred.push(w[(lookback - 1) * m + c]);
                truth.push(w[(lookback + i) * m + c]);
            }
        }
    }
    error_metrics(&pred, &truth)
}

//! Experiment orchestration: dataset preparation, single training runs,
//! lambda sweeps, robustness and horizon studies, baselines and result files.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::normalize::STD_FLOOR;
use crate::data::{normalize, split, windows, NoiseSpec, NormStats, SeriesFrame, SplitRanges, Windows};
use crate::engine::train::{train, TrainConfig};
use crate::engine::{mean_loss, scaled_forecast_errors, LinearForecaster, ModelSpec, MpsSsm, Objective, ParameterSet};
use crate::error::{Error, Result};
use crate::objective::RegularizerVariant;
use crate::ssm::SsmConfig;

pub mod emit;
pub mod metrics;
pub mod robustness;
pub mod svg;
pub mod sweep;

pub use emit::{emit, write_metrics_csv, Emission, METRICS_COLUMNS};
pub use metrics::{error_metrics, evaluate, persistence_baseline, MetricsRecord, RunStatus};
pub use robustness::{robustness_eval, RobustnessResult};
pub use sweep::{horizon_study, lambda_sweep, HorizonRow, SweepPoint, SweepResult};

/// A normalized, split and windowed dataset ready for training.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub name: String,
    /// Normalized values.
    pub frame: SeriesFrame,
    pub stats: NormStats,
    pub splits: SplitRanges,
    pub lookback: usize,
    pub horizon: usize,
    pub targets: Vec<usize>,
    pub train: Windows,
    pub val: Windows,
    pub test: Windows,
    /// Train-split standard deviation of each channel on the normalized scale.
    pub channel_std: Vec<f64>,
}

/// Splits chronologically, z-scores with train statistics, and windows each split.
pub fn prepare(
    frame: &SeriesFrame,
    lookback: usize,
    horizon: usize,
    ratios: [f64; 3],
    targets: Option<Vec<usize>>,
) -> Result<Prepared> {
    if lookback == 0 || horizon == 0 {
        return Err(Error::config("lookback", "lookback and horizon must be positive"));
    }
    let rows = lookback + horizon;
    let splits = split(frame.len(), ratios, rows)?;
    let (norm, stats) = normalize(frame, splits.train.clone())?;
    let m = frame.num_channels();
    let make = |r: &std::ops::Range<usize>| windows(&norm.values, m, r.clone(), lookback, horizon, 1);
    let targets = targets.unwrap_or_else(|| frame.targets.clone());
    if targets.is_empty() || targets.iter().any(|&t| t >= m) {
        return Err(Error::config("target_channels", "target channel out of range"));
    }
    let channel_std = stats.std.iter().map(|s| (s - STD_FLOOR) / s).collect();
    Ok(Prepared {
        name: frame.name.clone(),
        train: make(&splits.train)?,
        val: make(&splits.val)?,
        test: make(&splits.test)?,
        frame: norm,
        stats,
        splits,
        lookback,
        horizon,
        targets,
        channel_std,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    MpsSsm,
    Linear,
}

/// Width and loss settings shared by every run of an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Architecture {
    pub embed_dim: usize,
    pub state_dim: usize,
    pub bottleneck_dim: usize,
    pub stochastic: bool,
    pub multi_position_loss: bool,
    /// Leading unscored positions; `None` means a quarter of the lookback.
    pub warmup: Option<usize>,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            embed_dim: 16,
            state_dim: 16,
            bottleneck_dim: 16,
            stochastic: true,
            multi_position_loss: true,
            warmup: None,
        }
    }
}

/// Everything but the dataset and lambda needed to train and score runs.
#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub model: ModelKind,
    pub arch: Architecture,
    pub variant: RegularizerVariant,
    pub train: TrainConfig,
    pub seeds: Vec<u64>,
    /// Test-time impulse noise for robustness metrics.
    pub noise: Option<NoiseSpec>,
    /// Fill `wall_secs`; off by default so repeated runs emit identical files.
    pub record_timing: bool,
    /// Report test errors in original units instead of the normalized scale.
    pub denormalize_metrics: bool,
}

impl Default for Experiment {
    fn default() -> Self {
        Self {
            model: ModelKind::MpsSsm,
            arch: Architecture::default(),
            variant: RegularizerVariant::Rate,
            train: TrainConfig::default(),
            seeds: vec![0, 1, 2],
            noise: None,
            record_timing: false,
            denormalize_metrics: false,
        }
    }
}

impl Experiment {
    /// Model for `data` at penalty `lambda`. The linear model gains its
    /// Gaussian bottleneck only when `lambda > 0`.
    pub fn build_model(&self, data: &Prepared, lambda: f64) -> Result<ModelSpec> {
        let m = data.frame.num_channels();
        match self.model {
            ModelKind::MpsSsm => {
                let mut cfg = SsmConfig::new(m, data.lookback, data.horizon);
                cfg.targets = data.targets.clone();
                cfg.embed_dim = self.arch.embed_dim;
                cfg.state_dim = self.arch.state_dim;
                cfg.bottleneck_dim = self.arch.bottleneck_dim;
                cfg.stochastic = self.arch.stochastic;
                cfg.multi_position_loss = self.arch.multi_position_loss;
                if let Some(w) = self.arch.warmup {
                    cfg.warmup = w;
                }
                Ok(ModelSpec::MpsSsm(MpsSsm::new(cfg)?))
            }
            ModelKind::Linear => {
                let mut lin = LinearForecaster::plain(m, data.targets.clone(), data.lookback, data.horizon);
                if lambda > 0.0 {
                    lin.bottleneck_dim = Some(self.arch.bottleneck_dim);
                    lin.stochastic = self.arch.stochastic;
                }
                lin.validate()?;
                Ok(ModelSpec::Linear(lin))
            }
        }
    }

    pub fn variant_label(&self) -> String {
        match self.model {
            ModelKind::MpsSsm => self.variant.name().to_string(),
            ModelKind::Linear => "linear".to_string(),
        }
    }

    pub fn objective(&self, lambda: f64) -> Result<Objective> {
        let variant = match self.model {
            ModelKind::MpsSsm => self.variant,
            ModelKind::Linear => RegularizerVariant::Rate,
        };
        Objective::new(lambda, variant)
    }
}

/// Trained parameters plus the record describing the run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub record: MetricsRecord,
    pub model: ModelSpec,
    pub params: Option<ParameterSet>,
}

/// Trains one `(lambda, seed)` run and scores it on validation and test
/// windows, clean and (when configured) noisy. Training failures become a
/// failed record rather than an error.
pub fn run_once(data: &Prepared, exp: &Experiment, lambda: f64, seed: u64) -> Result<RunOutput> {
    let spec = exp.build_model(data, lambda)?;
    let obj = exp.objective(lambda)?;
    let mut record = MetricsRecord::new(&data.name, data.lookback, data.horizon, lambda, &exp.variant_label(), seed);
    let started = Instant::now();
    let model = spec.as_forecaster();
    let outcome = match train(model, obj, &data.train, &data.val, &exp.train, seed) {
        Ok(o) => o,
        Err(e) if !e.is_config() => {
            log::warn!("run lambda={lambda} seed={seed} failed: {e}");
            record.status = RunStatus::Failed { reason: e.to_string() };
            return Ok(RunOutput {
                record,
                model: spec,
                params: None,
            });
        }
        Err(e) => return Err(e),
    };
    let params = outcome.params;
    record.val_mse = Some(outcome.best_val_mse);
    record.epochs = outcome.history.len();
    let scale = exp.denormalize_metrics.then_some(data.stats.std.as_slice());
    let (mse, mae) = scaled_forecast_errors(model, &params, &data.test, scale)?;
    record.mse_clean = Some(mse);
    record.mae_clean = Some(mae);
    let loss = mean_loss(model, &params, &data.train, &obj)?;
    record.loss_pred = Some(loss.pred);
    record.loss_min = Some(loss.min);
    if let Some(noise) = &exp.noise {
        let r = robustness_eval(model, &params, &data.test, noise, &data.channel_std, scale)?;
        record.mse_noisy = Some(r.mse_noisy);
        record.mae_noisy = Some(r.mae_noisy);
        record.degradation_pct = r.degradation_pct;
        record.invariance_kl = r.invariance_kl;
    }
    if exp.record_timing {
        record.wall_secs = Some(started.elapsed().as_secs_f64());
    }
    log::info!(
        "{} lambda={lambda} seed={seed}: val {:.6} test {:.6} ({} epochs, {:.1}s)",
        data.name,
        outcome.best_val_mse,
        mse,
        record.epochs,
        started.elapsed().as_secs_f64()
    );
    Ok(RunOutput {
        record,
        model: spec,
        params: Some(params),
    })
}

/// Trains the direct linear forecaster at `lambda` for each seed.
pub fn linear_baseline(data: &Prepared, exp: &Experiment, lambda: f64) -> Result<Vec<MetricsRecord>> {
    let exp = Experiment {
        model: ModelKind::Linear,
        ..exp.clone()
    };
    exp.seeds
        .iter()
        .map(|&seed| run_once(data, &exp, lambda, seed).map(|r| r.record))
        .collect()
}

/// Mean of the finite values produced by `f`, or `None` when there are none.
pub fn mean_of<T>(items: &[T], f: impl Fn(&T) -> Option<f64>) -> Option<f64> {
    let vals: Vec<f64> = items.iter().filter_map(f).filter(|v| v.is_finite()).collect();
    (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
}

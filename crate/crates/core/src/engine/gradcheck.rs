use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use rand::Rng;
use rand_distr::StandardNormal;

use crate::data::windows::{windows, Windows};
use crate::data::{gen_synthetic, normalize, SyntheticSpec};
use crate::engine::model::{Forecaster, MpsSsm, Objective};
use crate::engine::params::ParameterSet;
use crate::engine::gradients;
use crate::engine::train::{stream_rng, TrainConfig, Trainer};
use crate::error::Result;
use crate::objective::RegularizerVariant;
use crate::ssm::SsmConfig;

const CHECK_NOISE_STREAM: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradCheckOptions {
    /// Central-difference step.
    pub step: f64,
    /// Check a seeded random subset of this many coordinates when the model
    /// is larger; `None` checks all of them.
    pub max_coords: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            step: 1e-5,
            max_coords: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    /// Largest `|analytic - numeric| / max(1, |analytic|, |numeric|)`.
    pub max_rel_err: f64,
    /// Coordinate attaining the maximum, as `array[offset]`.
    pub worst: String,
    pub checked: usize,
    pub total: usize,
}

/// Compares an analytic gradient against central differences of `loss`.
pub fn compare_gradient<F>(
    params: &ParameterSet,
    analytic: &ParameterSet,
    loss: F,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport>
where
    F: Fn(&ParameterSet) -> Result<f64> + Sync,
{
    let total = params.num_values();
    let coords: Vec<usize> = match opts.max_coords {
        Some(n) if n < total => {
            let mut idx = sample(&mut stream_rng(opts.seed, 7), total, n).into_vec();
            idx.sort_unstable();
            idx
        }
        _ => (0..total).collect(),
    };
    let errs: Vec<(f64, usize)> = coords
        .par_iter()
        .map(|&flat| {
            let mut p = params.clone();
            let orig = p.value_at(flat);
            p.set_value_at(flat, orig + opts.step);
            let plus = loss(&p)?;
            p.set_value_at(flat, orig - opts.step);
            let minus = loss(&p)?;
            let numeric = (plus - minus) / (2.0 * opts.step);
            let a = analytic.value_at(flat);
            let denom = 1f64.max(a.abs()).max(numeric.abs());
            Ok(((a - numeric).abs() / denom, flat))
        })
        .collect::<Result<_>>()?;
    let (max_rel_err, worst) = errs
        .iter()
        .fold((0.0f64, 0usize), |acc, &(e, i)| if e > acc.0 || e.is_nan() { (e, i) } else { acc });
    Ok(GradCheckReport {
        max_rel_err,
        worst: if coords.is_empty() {
            String::new()
        } else {
            params.flat_name(worst)
        },
        checked: coords.len(),
        total,
    })
}

/// Checks [`gradients`] of the mean batch loss against central differences.
///
/// `noise` is held fixed so the stochastic objective is a deterministic
/// function of the parameters.
pub fn grad_check(
    model: &dyn Forecaster,
    params: &ParameterSet,
    windows: &Windows,
    batch: &[usize],
    obj: &Objective,
    noise: &[f64],
    opts: &GradCheckOptions,
) -> Result<GradCheckReport> {
    let (_, analytic) = gradients(model, params, windows, batch, obj, noise)?;
    let nl = model.noise_len();
    let loss = |p: &ParameterSet| -> Result<f64> {
        let mut sum = 0.0;
        for (slot, &wi) in batch.iter().enumerate() {
            let n = (!noise.is_empty()).then(|| &noise[slot * nl..(slot + 1) * nl]);
            sum += model.loss(p, windows.get(wi), obj, n)?.total;
        }
        Ok(sum / batch.len() as f64)
    };
    compare_gradient(params, &analytic, loss, opts)
}

/// Gradient check of a small two-channel model (lookback 8, horizon 2,
/// embedding, state and bottleneck width 4) on synthetic windows, after
/// `train_steps` Adam steps from the seeded initialization.
pub fn small_model_check(
    variant: RegularizerVariant,
    lambda: f64,
    train_steps: usize,
    seed: u64,
) -> Result<GradCheckReport> {
    let mut cfg = SsmConfig::new(2, 8, 2);
    cfg.targets = vec![0];
    cfg.embed_dim = 4;
    cfg.state_dim = 4;
    cfg.bottleneck_dim = 4;
    let model = MpsSsm::new(cfg)?;
    let obj = Objective::new(lambda, variant)?;
    let frame = gen_synthetic(&SyntheticSpec {
        length: 200,
        seed,
        ..Default::default()
    })?;
    let (norm, _) = normalize(&frame, 0..frame.len())?;
    let wins = windows(&norm.values, 2, 0..norm.len(), 8, 2, 1)?;
    let train_cfg = TrainConfig {
        batch_size: 8,
        ..Default::default()
    };
    let mut trainer = Trainer::new(&model, obj, train_cfg, seed)?;
    trainer.run_steps(&wins, train_steps)?;
    let batch = [0, 37, 91, 150];
    let mut rng = stream_rng(seed, CHECK_NOISE_STREAM);
    let noise: Vec<f64> = (0..model.noise_len() * batch.len()).map(|_| rng.sample(StandardNormal)).collect();
    let opts = GradCheckOptions {
        seed,
        ..Default::default()
    };
    grad_check(&model, &trainer.state.params, &wins, &batch, &obj, &noise, &opts)
}

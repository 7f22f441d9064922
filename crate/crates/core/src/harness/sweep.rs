use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{mean_of, prepare, run_once, Experiment, MetricsRecord, Prepared};
use crate::data::SeriesFrame;
use crate::error::{Error, Result};
use crate::objective::check_lambda;

/// Seed-averaged outcome at one lambda.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub lambda: f64,
    pub runs: usize,
    pub failures: usize,
    pub mean_val_mse: Option<f64>,
    pub mean_test_mse: Option<f64>,
    pub std_test_mse: Option<f64>,
    pub mean_test_mae: Option<f64>,
    pub mean_noisy_mse: Option<f64>,
    pub mean_degradation_pct: Option<f64>,
    pub mean_invariance_kl: Option<f64>,
}

impl SweepPoint {
    fn from_records(lambda: f64, recs: &[&MetricsRecord]) -> Self {
        let owned: Vec<MetricsRecord> = recs.iter().map(|r| (*r).clone()).collect();
        let mean_test_mse = mean_of(&owned, |r| r.mse_clean);
        let std_test_mse = mean_test_mse.map(|m| {
            let v: Vec<f64> = owned.iter().filter_map(|r| r.mse_clean).collect();
            (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
        });
        Self {
            lambda,
            runs: owned.len(),
            failures: owned.iter().filter(|r| !r.is_ok()).count(),
            mean_val_mse: mean_of(&owned, |r| r.val_mse),
            mean_test_mse,
            std_test_mse,
            mean_test_mae: mean_of(&owned, |r| r.mae_clean),
            mean_noisy_mse: mean_of(&owned, |r| r.mse_noisy),
            mean_degradation_pct: mean_of(&owned, |r| r.degradation_pct),
            mean_invariance_kl: mean_of(&owned, |r| r.invariance_kl),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub dataset: String,
    pub horizon: usize,
    /// One record per (lambda, seed), in grid then seed order.
    pub records: Vec<MetricsRecord>,
    /// One point per grid entry, in grid order.
    pub points: Vec<SweepPoint>,
    /// Grid value with the lowest mean validation MSE; ties go to the smaller
    /// lambda. `None` only if every run failed.
    pub sweet_spot: Option<f64>,
}

impl SweepResult {
    pub fn point(&self, lambda: f64) -> Option<&SweepPoint> {
        self.points.iter().find(|p| p.lambda == lambda)
    }
}

pub fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::config("lambda_grid", "grid is empty"));
    }
    for &l in grid {
        check_lambda(l)?;
    }
    Ok(())
}

/// Trains every `(lambda, seed)` pair, then summarizes per lambda.
///
/// Each run's seed depends only on the configured seed, so every lambda sees
/// the same initialization, batch order and sampling noise, and changing the
/// grid never changes another point's results.
pub fn lambda_sweep(data: &Prepared, exp: &Experiment, grid: &[f64]) -> Result<SweepResult> {
    check_grid(grid)?;
    if exp.seeds.is_empty() {
        return Err(Error::config("seeds", "at least one seed required"));
    }
    let jobs: Vec<(f64, u64)> = grid
        .iter()
        .flat_map(|&l| exp.seeds.iter().map(move |&s| (l, s)))
        .collect();
    let records: Vec<MetricsRecord> = jobs
        .par_iter()
        .map(|&(l, s)| run_once(data, exp, l, s).map(|r| r.record))
        .collect::<Result<_>>()?;
    let points: Vec<SweepPoint> = grid
        .iter()
        .map(|&l| {
            let recs: Vec<&MetricsRecord> = records.iter().filter(|r| r.lambda == l).collect();
            SweepPoint::from_records(l, &recs)
        })
        .collect();
    let sweet_spot = points
        .iter()
        .filter_map(|p| p.mean_val_mse.map(|v| (v, p.lambda)))
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)))
        .map(|(_, l)| l);
    Ok(SweepResult {
        dataset: data.name.clone(),
        horizon: data.horizon,
        records,
        points,
        sweet_spot,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonRow {
    pub horizon: usize,
    pub sweet_spot: Option<f64>,
    /// Mean test MSE at the sweet spot.
    pub test_mse: Option<f64>,
}

/// Runs a lambda sweep per horizon.
pub fn horizon_study(
    frame: &SeriesFrame,
    exp: &Experiment,
    lookback: usize,
    horizons: &[usize],
    grid: &[f64],
    ratios: [f64; 3],
    targets: Option<Vec<usize>>,
) -> Result<(Vec<HorizonRow>, Vec<SweepResult>)> {
    if horizons.is_empty() {
        return Err(Error::config("horizons", "no horizons given"));
    }
    if horizons.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::config("horizons", "horizons must be strictly ascending"));
    }
    let mut rows = Vec::new();
    let mut sweeps = Vec::new();
    for &tau in horizons {
        let data = prepare(frame, lookback, tau, ratios, targets.clone())?;
        let sweep = lambda_sweep(&data, exp, grid)?;
        let test_mse = sweep
            .sweet_spot
            .and_then(|l| sweep.point(l))
            .and_then(|p| p.mean_test_mse);
        rows.push(HorizonRow {
            horizon: tau,
            sweet_spot: sweep.sweet_spot,
            test_mse,
        });
        sweeps.push(sweep);
    }
    Ok((rows, sweeps))
}

use std::path::{Path, PathBuf};

use serde::Serialize;

use super::svg::{line_chart, Series};
use super::{HorizonRow, MetricsRecord, SweepResult};
use crate::error::{Error, Result};

/// Column order of `metrics.csv`.
pub const METRICS_COLUMNS: [&str; 15] = [
    "dataset",
    "T",
    "tau",
    "lambda",
    "variant",
    "seed",
    "mse_clean",
    "mae_clean",
    "mse_noisy",
    "mae_noisy",
    "degradation_pct",
    "invariance_kl",
    "loss_pred",
    "loss_min",
    "wall_secs",
];

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

/// Writes one CSV row per record; absent values are empty cells.
pub fn write_metrics_csv(records: &[MetricsRecord], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(METRICS_COLUMNS)?;
    for r in records {
        w.write_record([
            r.dataset.clone(),
            r.lookback.to_string(),
            r.horizon.to_string(),
            r.lambda.to_string(),
            r.variant.clone(),
            r.seed.to_string(),
            opt(r.mse_clean),
            opt(r.mae_clean),
            opt(r.mse_noisy),
            opt(r.mae_noisy),
            opt(r.degradation_pct),
            opt(r.invariance_kl),
            opt(r.loss_pred),
            opt(r.loss_min),
            opt(r.wall_secs),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[derive(Serialize)]
struct MetricsDocument<'a> {
    records: &'a [MetricsRecord],
    sweeps: Vec<SweepSummary<'a>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    horizons: Option<&'a [HorizonRow]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    extra: Option<&'a serde_json::Value>,
}

#[derive(Serialize)]
struct SweepSummary<'a> {
    dataset: &'a str,
    horizon: usize,
    sweet_spot: Option<f64>,
    points: &'a [super::SweepPoint],
}

/// Result files of one command.
#[derive(Debug, Default)]
pub struct Emission<'a> {
    pub records: &'a [MetricsRecord],
    pub sweeps: &'a [SweepResult],
    pub horizons: Option<&'a [HorizonRow]>,
    /// Command-specific values added to `metrics.json`.
    pub extra: Option<serde_json::Value>,
}

/// Writes `metrics.csv`, `metrics.json` and, for sweeps, `sweep.svg` and
/// (when noisy metrics exist) `robustness.svg`. Returns the written paths.
pub fn emit(e: &Emission<'_>, out_dir: &Path) -> Result<Vec<PathBuf>> {
    if e.records.is_empty() {
        return Err(Error::Data("no metrics records to emit".into()));
    }
    std::fs::create_dir_all(out_dir).map_err(|err| Error::io(out_dir, err))?;
    let mut written = Vec::new();

    let csv_path = out_dir.join("metrics.csv");
    write_metrics_csv(e.records, &csv_path)?;
    written.push(csv_path);

    let doc = MetricsDocument {
        records: e.records,
        sweeps: e
            .sweeps
            .iter()
            .map(|s| SweepSummary {
                dataset: &s.dataset,
                horizon: s.horizon,
                sweet_spot: s.sweet_spot,
                points: &s.points,
            })
            .collect(),
        horizons: e.horizons,
        extra: e.extra.as_ref(),
    };
    let json_path = out_dir.join("metrics.json");
    let text = serde_json::to_string_pretty(&doc)?;
    std::fs::write(&json_path, text + "\n").map_err(|err| Error::io(&json_path, err))?;
    written.push(json_path);

    if !e.sweeps.is_empty() {
        let mut mse = Vec::new();
        let mut degr = Vec::new();
        for s in e.sweeps {
            let tag = format!("{} tau={}", s.dataset, s.horizon);
            let pick = |f: fn(&super::SweepPoint) -> Option<f64>| -> Vec<(f64, f64)> {
                s.points.iter().filter_map(|p| f(p).map(|v| (p.lambda, v))).collect()
            };
            mse.push(Series {
                name: format!("{tag} val"),
                points: pick(|p| p.mean_val_mse),
            });
            mse.push(Series {
                name: format!("{tag} test"),
                points: pick(|p| p.mean_test_mse),
            });
            let d = pick(|p| p.mean_degradation_pct);
            if !d.is_empty() {
                degr.push(Series {
                    name: format!("{tag} degradation"),
                    points: d,
                });
            }
        }
        let path = out_dir.join("sweep.svg");
        std::fs::write(&path, line_chart("Mean MSE across lambda", "MSE", &mse)).map_err(|err| Error::io(&path, err))?;
        written.push(path);
        if !degr.is_empty() {
            let path = out_dir.join("robustness.svg");
            std::fs::write(&path, line_chart("Degradation under impulse noise", "degradation %", &degr))
                .map_err(|err| Error::io(&path, err))?;
            written.push(path);
        }
    }
    Ok(written)
}

//! `mps-ssm`: trains, sweeps and evaluates the forecaster from a JSON config.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::{info, warn};
use serde_json::json;

use mps_ssm::config::{DatasetSource, ExperimentConfig};
use mps_ssm::data::{write_csv, NoiseSpec};
use mps_ssm::engine::{scaled_forecast_errors, small_model_check, Checkpoint, ModelSpec};
use mps_ssm::harness::{
    emit, horizon_study, lambda_sweep, robustness_eval, run_once, Emission, MetricsRecord,
};
use mps_ssm::objective::RegularizerVariant;
use mps_ssm::{Error, Result};

/// Gradient checks pass below this relative error.
const GRAD_TOLERANCE: f64 = 1e-4;

#[derive(Parser, Debug)]
#[command(name = "mps-ssm", version, about = "Selective state-space forecaster with a minimality regularizer")]
struct Cli {
    /// JSON experiment config; without one every setting takes its default.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,

    /// Output directory; overrides `output_dir` in the config.
    #[arg(long, global = true, env = "MPS_SSM_OUT_DIR")]
    out_dir: Option<PathBuf>,

    /// Use this single lambda instead of the configured grid.
    #[arg(long, global = true, allow_hyphen_values = true)]
    lambda: Option<f64>,

    /// Comma-separated seeds.
    #[arg(long, global = true, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,

    /// Maximum training epochs.
    #[arg(long, global = true)]
    epochs: Option<usize>,

    /// Lookback window length.
    #[arg(long, global = true)]
    lookback: Option<usize>,

    /// Forecast horizon.
    #[arg(long, global = true)]
    horizon: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train one model per seed at a single lambda and save checkpoints.
    Train,
    /// Score a saved checkpoint on the configured dataset's test split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Train every (lambda, seed) pair and pick the validation sweet spot.
    Sweep,
    /// Sweep with impulse noise and report degradation per lambda.
    Robustness,
    /// Run a sweep per configured horizon.
    Horizon,
    /// Sweep with impulse noise and report posterior invariance per lambda.
    Invariance,
    /// Write the configured synthetic series as CSV.
    Synth {
        /// Destination; defaults to `synthetic.csv` in the output directory.
        #[arg(long)]
        file: Option<PathBuf>,
    },
    /// Finite-difference check of the analytic gradient on a small model.
    GradCheck {
        /// Adam steps taken before checking.
        #[arg(long, default_value_t = 0)]
        steps: usize,
    },
}

fn effective_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::from_path(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(d) = &cli.out_dir {
        cfg.output_dir = d.clone();
    }
    if let Some(l) = cli.lambda {
        cfg.lambda_grid = vec![l];
    }
    if let Some(s) = &cli.seeds {
        cfg.seeds = s.clone();
    }
    if let Some(e) = cli.epochs {
        cfg.optimizer.max_epochs = e;
    }
    if let Some(t) = cli.lookback {
        cfg.lookback = t;
    }
    if let Some(h) = cli.horizon {
        cfg.horizon = h;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_effective_config(cfg: &ExperimentConfig) -> Result<()> {
    let dir = &cfg.output_dir;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join("config.json");
    std::fs::write(&path, cfg.to_json()?).map_err(|e| Error::io(&path, e))
}

fn run(cli: &Cli) -> Result<()> {
    let mut cfg = effective_config(cli)?;
    if matches!(cli.command, Command::Robustness | Command::Invariance) && cfg.noise.is_none() {
        cfg.noise = Some(NoiseSpec::default());
    }
    write_effective_config(&cfg)?;
    let out = cfg.output_dir.clone();
    match &cli.command {
        Command::Train => train(&cfg, &out),
        Command::Eval { checkpoint } => eval(&cfg, checkpoint, &out),
        Command::Sweep | Command::Robustness => sweep(&cfg, &out, false),
        Command::Invariance => sweep(&cfg, &out, true),
        Command::Horizon => horizon(&cfg, &out),
        Command::Synth { file } => synth(&cfg, file.clone().unwrap_or_else(|| out.join("synthetic.csv"))),
        Command::GradCheck { steps } => grad_check(&cfg, cli.lambda.unwrap_or(1.0), *steps, &out),
    }
}

fn train(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let [lambda] = cfg.lambda_grid[..] else {
        return Err(Error::config("lambda_grid", "train takes a single lambda; pass --lambda"));
    };
    let frame = cfg.load_frame()?;
    let data = cfg.prepare(&frame)?;
    let exp = cfg.experiment();
    let mut records = Vec::new();
    for &seed in &cfg.seeds {
        let run = run_once(&data, &exp, lambda, seed)?;
        if let Some(params) = run.params {
            let ck = Checkpoint::new(run.model, exp.objective(lambda)?, seed, Some(data.stats.clone()), params);
            let path = out.join(format!("checkpoint_seed{seed}.json"));
            ck.save(&path)?;
            info!("wrote {}", path.display());
        }
        records.push(run.record);
    }
    emit_records(&records, out)
}

fn eval(cfg: &ExperimentConfig, checkpoint: &Path, out: &Path) -> Result<()> {
    let ck = Checkpoint::load(checkpoint)?;
    let model = ck.model.as_forecaster();
    let frame = cfg.load_frame()?;
    let data = mps_ssm::harness::prepare(
        &frame,
        model.lookback(),
        model.horizon(),
        cfg.split,
        Some(model.targets().to_vec()),
    )?;
    if ck.norm.as_ref().is_some_and(|n| *n != data.stats) {
        warn!("checkpoint was trained under different normalization statistics");
    }
    let variant = match &ck.model {
        ModelSpec::MpsSsm(_) => ck.objective.variant.name(),
        ModelSpec::Linear(_) => "linear",
    };
    let mut rec = MetricsRecord::new(
        &data.name,
        data.lookback,
        data.horizon,
        ck.objective.lambda,
        variant,
        ck.seed,
    );
    let scale = cfg.denormalize_metrics.then_some(data.stats.std.as_slice());
    let (mse, mae) = scaled_forecast_errors(model, &ck.params, &data.test, scale)?;
    rec.mse_clean = Some(mse);
    rec.mae_clean = Some(mae);
    if let Some(noise) = &cfg.noise {
        let r = robustness_eval(model, &ck.params, &data.test, noise, &data.channel_std, scale)?;
        rec.mse_noisy = Some(r.mse_noisy);
        rec.mae_noisy = Some(r.mae_noisy);
        rec.degradation_pct = r.degradation_pct;
        rec.invariance_kl = r.invariance_kl;
    }
    emit_records(&[rec], out)
}

/// Sweeps the grid; `invariance` adds a per-lambda divergence summary.
fn sweep(cfg: &ExperimentConfig, out: &Path, invariance: bool) -> Result<()> {
    let frame = cfg.load_frame()?;
    let data = cfg.prepare(&frame)?;
    let result = lambda_sweep(&data, &cfg.experiment(), &cfg.lambda_grid)?;
    info!("sweet spot: {:?}", result.sweet_spot);
    let extra = invariance.then(|| {
        json!({
            "invariance": result
                .points
                .iter()
                .map(|p| json!({ "lambda": p.lambda, "mean_invariance_kl": p.mean_invariance_kl }))
                .collect::<Vec<_>>()
        })
    });
    emit(
        &Emission {
            records: &result.records,
            sweeps: std::slice::from_ref(&result),
            horizons: None,
            extra,
        },
        out,
    )?;
    Ok(())
}

fn horizon(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let frame = cfg.load_frame()?;
    let targets = cfg.resolve_targets(&frame)?;
    let (rows, sweeps) = horizon_study(
        &frame,
        &cfg.experiment(),
        cfg.lookback,
        &cfg.horizons,
        &cfg.lambda_grid,
        cfg.split,
        targets,
    )?;
    let records: Vec<MetricsRecord> = sweeps.iter().flat_map(|s| s.records.iter().cloned()).collect();
    emit(
        &Emission {
            records: &records,
            sweeps: &sweeps,
            horizons: Some(&rows),
            extra: None,
        },
        out,
    )?;
    Ok(())
}

fn synth(cfg: &ExperimentConfig, path: PathBuf) -> Result<()> {
    if !matches!(cfg.dataset, DatasetSource::Synthetic(_)) {
        return Err(Error::config("dataset", "synth needs a synthetic dataset source"));
    }
    let frame = cfg.load_frame()?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    write_csv(&frame, &path)?;
    info!("wrote {} rows to {}", frame.len(), path.display());
    Ok(())
}

fn grad_check(cfg: &ExperimentConfig, lambda: f64, steps: usize, out: &Path) -> Result<()> {
    let decoder_weight = match cfg.variant {
        RegularizerVariant::Decoder { decoder_weight } => decoder_weight,
        RegularizerVariant::Rate => 1.0,
    };
    let seed = cfg.seeds[0];
    let mut results = Vec::new();
    let mut worst = (0.0f64, String::new());
    for variant in [RegularizerVariant::Rate, RegularizerVariant::Decoder { decoder_weight }] {
        let report = small_model_check(variant, lambda, steps, seed)?;
        println!(
            "{} max_rel_err={:e} worst={} checked={}",
            variant.name(),
            report.max_rel_err,
            report.worst,
            report.checked
        );
        if report.max_rel_err >= worst.0 {
            worst = (report.max_rel_err, format!("{}:{}", variant.name(), report.worst));
        }
        results.push(json!({ "variant": variant.name(), "report": report }));
    }
    let doc = json!({ "lambda": lambda, "steps": steps, "seed": seed, "tolerance": GRAD_TOLERANCE, "checks": results });
    let path = out.join("metrics.json");
    std::fs::write(&path, serde_json::to_string_pretty(&doc)? + "\n").map_err(|e| Error::io(&path, e))?;
    if worst.0 < GRAD_TOLERANCE {
        Ok(())
    } else {
        Err(Error::GradientMismatch {
            max_rel_err: worst.0,
            worst: worst.1,
            tolerance: GRAD_TOLERANCE,
        })
    }
}

fn emit_records(records: &[MetricsRecord], out: &Path) -> Result<()> {
    emit(
        &Emission {
            records,
            ..Default::default()
        },
        out,
    )?;
    Ok(())
}

/// One JSON line on standard error describing the failure.
fn report(kind: &str, key: Option<&str>, message: &str) {
    let mut v = json!({ "error": kind, "message": message });
    if let Some(k) = key {
        v["key"] = json!(k);
    }
    eprintln!("{v}");
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            report("usage", None, msg.lines().next().unwrap_or_default());
            return ExitCode::from(1);
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let key = match &e {
                Error::Config { key, .. } => Some(key.as_str()),
                _ => None,
            };
            let message = match &e {
                Error::Config { message, .. } => message.clone(),
                other => other.to_string(),
            };
            report(e.kind(), key, &message);
            if e.is_config() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}

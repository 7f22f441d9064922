use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_mps-ssm"));
    c.env_remove("MPS_SSM_OUT_DIR").env("RUST_LOG", "warn");
    c
}

fn small_config(dir: &Path, extra: Value) -> std::path::PathBuf {
    let mut cfg = json!({
        "dataset": {"source": "synthetic", "length": 400},
        "lookback": 8,
        "horizon": 2,
        "embed_dim": 4,
        "state_dim": 4,
        "bottleneck_dim": 4,
        "lambda_grid": [0.0, 1.0],
        "seeds": [0],
        "optimizer": {"max_epochs": 2}
    });
    for (k, v) in extra.as_object().unwrap() {
        cfg[k] = v.clone();
    }
    let path = dir.join("config.json.in");
    std::fs::write(&path, cfg.to_string()).unwrap();
    path
}

fn run(cmd: &mut Command) -> Output {
    let out = cmd.output().unwrap();
    eprintln!("{}", String::from_utf8_lossy(&out.stderr));
    out
}

fn csv_rows(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path).unwrap().lines().skip(1).map(String::from).collect()
}

fn error_line(out: &Output) -> Value {
    let stderr = String::from_utf8_lossy(&out.stderr);
    let line = stderr.lines().last().unwrap();
    serde_json::from_str(line).unwrap()
}

#[test]
fn grad_check_passes() {
    let dir = TempDir::new().unwrap();
    let out = run(bin().args(["grad-check", "--out-dir"]).arg(dir.path()));
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert_eq!(stdout.matches("max_rel_err=").count(), 2);
    assert!(dir.path().join("metrics.json").exists());
    assert!(dir.path().join("config.json").exists());
}

#[test]
fn two_point_sweep_has_a_row_per_lambda_and_seed() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(dir.path(), json!({}));
    let out = run(bin()
        .args(["sweep", "--seeds", "0,1", "--config"])
        .arg(&cfg)
        .arg("--out-dir")
        .arg(dir.path()));
    assert_eq!(out.status.code(), Some(0));
    let rows = csv_rows(&dir.path().join("metrics.csv"));
    assert_eq!(rows.len(), 4);
    assert!(dir.path().join("sweep.svg").exists());
    let echoed: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("config.json")).unwrap()).unwrap();
    assert_eq!(echoed["seeds"], json!([0, 1]));
}

#[test]
fn synth_output_trains_and_evaluates() {
    let dir = TempDir::new().unwrap();
    let csv = dir.path().join("series.csv");
    let cfg = small_config(dir.path(), json!({}));
    let out = run(bin().args(["synth", "--config"]).arg(&cfg).arg("--file").arg(&csv).arg("--out-dir").arg(dir.path()));
    assert_eq!(out.status.code(), Some(0));

    let cfg = small_config(dir.path(), json!({"dataset": {"source": "csv", "path": csv}, "target_channels": ["signal"]}));
    let train_dir = dir.path().join("train");
    let out = run(bin()
        .args(["train", "--lambda", "0.5", "--config"])
        .arg(&cfg)
        .arg("--out-dir")
        .arg(&train_dir));
    assert_eq!(out.status.code(), Some(0));
    let rows = csv_rows(&train_dir.join("metrics.csv"));
    assert_eq!(rows.len(), 1);
    assert!(rows[0].starts_with("series,8,2,0.5,rate,0,"), "{}", rows[0]);

    let eval_dir = dir.path().join("eval");
    let out = run(bin()
        .args(["eval", "--checkpoint"])
        .arg(train_dir.join("checkpoint_seed0.json"))
        .arg("--config")
        .arg(&cfg)
        .arg("--out-dir")
        .arg(&eval_dir));
    assert_eq!(out.status.code(), Some(0));
    // Evaluating the saved model reproduces the training run's test metrics.
    let trained: Vec<&str> = rows[0].split(',').collect();
    let eval_rows = csv_rows(&eval_dir.join("metrics.csv"));
    let evaluated: Vec<&str> = eval_rows[0].split(',').collect();
    assert_eq!(trained[6..8], evaluated[6..8]);
}

#[test]
fn lambda_flag_replaces_the_grid() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(dir.path(), json!({"lambda_grid": [0.0, 1.0, 2.0]}));
    let out = run(bin().args(["sweep", "--lambda", "2.0", "--config"]).arg(&cfg).arg("--out-dir").arg(dir.path()));
    assert_eq!(out.status.code(), Some(0));
    let echoed: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("config.json")).unwrap()).unwrap();
    assert_eq!(echoed["lambda_grid"], json!([2.0]));
    assert_eq!(csv_rows(&dir.path().join("metrics.csv")).len(), 1);
}

#[test]
fn negative_lambda_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let out = run(bin().args(["sweep", "--lambda", "-1", "--out-dir"]).arg(dir.path()));
    assert_eq!(out.status.code(), Some(1));
    let err = error_line(&out);
    assert_eq!(err["error"], "config");
    assert_eq!(err["key"], "lambda");
    assert!(!dir.path().join("metrics.csv").exists());
}

#[test]
fn unknown_config_key_is_named() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(dir.path(), json!({"optimizer": {"learning_rate": 0.1}}));
    let out = run(bin().args(["sweep", "--config"]).arg(&cfg).arg("--out-dir").arg(dir.path()));
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_line(&out)["key"], "optimizer.learning_rate");
}

#[test]
fn train_rejects_a_multi_point_grid() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(dir.path(), json!({}));
    let out = run(bin().args(["train", "--config"]).arg(&cfg).arg("--out-dir").arg(dir.path()));
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_line(&out)["key"], "lambda_grid");
}

#[test]
fn missing_dataset_is_a_runtime_error() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(dir.path(), json!({"dataset": {"source": "csv", "path": dir.path().join("nope.csv")}}));
    let out = run(bin().args(["sweep", "--config"]).arg(&cfg).arg("--out-dir").arg(dir.path()));
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_line(&out)["error"], "io");
}

#[test]
fn output_dir_comes_from_the_environment() {
    let dir = TempDir::new().unwrap();
    let target = dir.path().join("from_env");
    let out = run(bin().arg("grad-check").env("MPS_SSM_OUT_DIR", &target));
    assert_eq!(out.status.code(), Some(0));
    assert!(target.join("config.json").exists());
}

#[test]
fn repeated_runs_write_identical_metrics() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(dir.path(), json!({"noise": {"channels": [1]}}));
    let mut outputs = Vec::new();
    for name in ["a", "b"] {
        let d = dir.path().join(name);
        let out = run(bin().args(["robustness", "--config"]).arg(&cfg).arg("--out-dir").arg(&d));
        assert_eq!(out.status.code(), Some(0));
        outputs.push(std::fs::read(d.join("metrics.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn horizon_study_emits_one_sweep_per_horizon() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(dir.path(), json!({"horizons": [2, 4], "lambda_grid": [0.0]}));
    let out = run(bin().args(["horizon", "--config"]).arg(&cfg).arg("--out-dir").arg(dir.path()));
    assert_eq!(out.status.code(), Some(0));
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("metrics.json")).unwrap()).unwrap();
    assert_eq!(doc["horizons"].as_array().unwrap().len(), 2);
    assert_eq!(csv_rows(&dir.path().join("metrics.csv")).len(), 2);
}

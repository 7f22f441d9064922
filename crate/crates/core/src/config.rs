//! JSON experiment configuration shared by the command-line tool and tests.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{gen_synthetic, load_csv, NoiseSpec, SeriesFrame, SyntheticSpec};
use crate::engine::train::TrainConfig;
use crate::engine::Objective;
use crate::error::{Error, Result};
use crate::harness::sweep::check_grid;
use crate::harness::{prepare, Architecture, Experiment, ModelKind, Prepared};
use crate::objective::RegularizerVariant;

/// Grid swept when none is configured.
pub const DEFAULT_LAMBDA_GRID: [f64; 10] = [0.0, 0.01, 0.1, 1.0, 2.0, 5.0, 10.0, 100.0, 1000.0, 1e9];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DatasetSource {
    /// Generated AR(2) signal plus distractor.
    Synthetic(SyntheticSpec),
    Csv {
        path: PathBuf,
        /// Dataset label in metrics; defaults to the file stem.
        #[serde(default)]
        name: Option<String>,
    },
}

impl Default for DatasetSource {
    fn default() -> Self {
        DatasetSource::Synthetic(SyntheticSpec::default())
    }
}

/// A channel named by index or by header name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ChannelRef {
    Index(usize),
    Name(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    /// Forecast channels; `None` uses the dataset's own targets.
    pub target_channels: Option<Vec<ChannelRef>>,
    pub lookback: usize,
    pub horizon: usize,
    pub embed_dim: usize,
    pub state_dim: usize,
    pub bottleneck_dim: usize,
    pub stochastic: bool,
    pub multi_position_loss: bool,
    pub warmup: Option<usize>,
    /// Train, validation and test fractions.
    pub split: [f64; 3],
    pub lambda_grid: Vec<f64>,
    pub variant: RegularizerVariant,
    pub model: ModelKind,
    pub optimizer: TrainConfig,
    /// Test-time impulse noise. Sweeps add noisy metrics only when set; the
    /// robustness and invariance commands fall back to the defaults.
    pub noise: Option<NoiseSpec>,
    pub seeds: Vec<u64>,
    /// Horizons for the horizon study, ascending.
    pub horizons: Vec<usize>,
    pub output_dir: PathBuf,
    pub record_timing: bool,
    pub denormalize_metrics: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let arch = Architecture::default();
        Self {
            dataset: DatasetSource::default(),
            target_channels: None,
            lookback: 96,
            horizon: 96,
            embed_dim: arch.embed_dim,
            state_dim: arch.state_dim,
            bottleneck_dim: arch.bottleneck_dim,
            stochastic: arch.stochastic,
            multi_position_loss: arch.multi_position_loss,
            warmup: arch.warmup,
            split: [0.7, 0.1, 0.2],
            lambda_grid: DEFAULT_LAMBDA_GRID.to_vec(),
            variant: RegularizerVariant::Rate,
            model: ModelKind::MpsSsm,
            optimizer: TrainConfig::default(),
            noise: None,
            seeds: vec![0, 1, 2],
            horizons: vec![24, 48, 96],
            output_dir: PathBuf::from("out"),
            record_timing: false,
            denormalize_metrics: false,
        }
    }
}

fn path_key(path: &serde_path_to_error::Path) -> String {
    let p = path.to_string();
    if p == "." {
        "config".to_string()
    } else {
        p
    }
}

impl ExperimentConfig {
    /// Parses a JSON document; blank input gives the defaults. The result is
    /// not yet validated.
    pub fn from_json_str(text: &str) -> Result<Self> {
        if text.trim().is_empty() {
            return Ok(Self::default());
        }
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let key = path_key(e.path());
            Error::config(key, e.into_inner().to_string())
        })
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// Checks every constraint that does not need the data.
    pub fn validate(&self) -> Result<()> {
        for (key, v) in [
            ("lookback", self.lookback),
            ("horizon", self.horizon),
            ("embed_dim", self.embed_dim),
            ("state_dim", self.state_dim),
            ("bottleneck_dim", self.bottleneck_dim),
        ] {
            if v == 0 {
                return Err(Error::config(key, "must be at least 1"));
            }
        }
        if let Some(w) = self.warmup {
            if w >= self.lookback {
                return Err(Error::config("warmup", format!("must be below lookback {}", self.lookback)));
            }
        }
        let sum: f64 = self.split.iter().sum();
        if self.split.iter().any(|r| !(r.is_finite() && *r > 0.0)) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::config("split", format!("ratios {:?} must be positive and sum to 1", self.split)));
        }
        check_grid(&self.lambda_grid)?;
        Objective::new(0.0, self.variant)?;
        self.optimizer.validate()?;
        if self.seeds.is_empty() {
            return Err(Error::config("seeds", "at least one seed required"));
        }
        if self.horizons.is_empty() || self.horizons.contains(&0) {
            return Err(Error::config("horizons", "horizons must be positive and non-empty"));
        }
        if self.horizons.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("horizons", "horizons must be strictly ascending"));
        }
        if let DatasetSource::Synthetic(spec) = &self.dataset {
            spec.validate()?;
            if let Some(noise) = &self.noise {
                noise.validate(2)?;
            }
        }
        if let Some(noise) = &self.noise {
            noise.validate(usize::MAX)?;
        }
        if self.model == ModelKind::Linear && self.variant != RegularizerVariant::Rate {
            return Err(Error::config("variant", "the linear model supports only the rate variant"));
        }
        Ok(())
    }

    /// Generates or reads the configured series.
    pub fn load_frame(&self) -> Result<SeriesFrame> {
        match &self.dataset {
            DatasetSource::Synthetic(spec) => gen_synthetic(spec),
            DatasetSource::Csv { path, name } => {
                let mut frame = load_csv(path)?;
                if let Some(n) = name {
                    frame.name = n.clone();
                }
                Ok(frame)
            }
        }
    }

    /// Channel indices for `target_channels`, checked against `frame`.
    pub fn resolve_targets(&self, frame: &SeriesFrame) -> Result<Option<Vec<usize>>> {
        let Some(refs) = &self.target_channels else {
            return Ok(None);
        };
        if refs.is_empty() {
            return Err(Error::config("target_channels", "list is empty"));
        }
        refs.iter()
            .map(|r| match r {
                ChannelRef::Index(i) if *i < frame.num_channels() => Ok(*i),
                ChannelRef::Index(i) => Err(Error::config(
                    "target_channels",
                    format!("index {i} out of range for {} channels", frame.num_channels()),
                )),
                ChannelRef::Name(n) => frame
                    .channel_index(n)
                    .ok_or_else(|| Error::config("target_channels", format!("no channel named {n:?}"))),
            })
            .collect::<Result<Vec<_>>>()
            .map(Some)
    }

    pub fn architecture(&self) -> Architecture {
        Architecture {
            embed_dim: self.embed_dim,
            state_dim: self.state_dim,
            bottleneck_dim: self.bottleneck_dim,
            stochastic: self.stochastic,
            multi_position_loss: self.multi_position_loss,
            warmup: self.warmup,
        }
    }

    pub fn experiment(&self) -> Experiment {
        Experiment {
            model: self.model,
            arch: self.architecture(),
            variant: self.variant,
            train: self.optimizer,
            seeds: self.seeds.clone(),
            noise: self.noise.clone(),
            record_timing: self.record_timing,
            denormalize_metrics: self.denormalize_metrics,
        }
    }

    /// Normalized, split and windowed data at `horizon`.
    pub fn prepare_at(&self, frame: &SeriesFrame, horizon: usize) -> Result<Prepared> {
        let targets = self.resolve_targets(frame)?;
        if let Some(noise) = &self.noise {
            noise.validate(frame.num_channels())?;
        }
        prepare(frame, self.lookback, horizon, self.split, targets)
    }

    pub fn prepare(&self, frame: &SeriesFrame) -> Result<Prepared> {
        self.prepare_at(frame, self.horizon)
    }
}

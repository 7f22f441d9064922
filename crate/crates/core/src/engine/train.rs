use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::windows::Windows;
use crate::engine::adam::{adam_step, AdamConfig, TrainState};
use crate::engine::model::{Forecaster, Objective};
use crate::engine::params::ParameterSet;
use crate::engine::{forecast_errors, gradients};
use crate::error::{Error, Result};
use crate::objective::LossBreakdown;

/// Generator streams carved out of one run seed.
const INIT_STREAM: u64 = 0;
const SHUFFLE_STREAM: u64 = 1;
const NOISE_STREAM: u64 = 2;

pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Fresh parameters for `model` under run seed `seed`.
pub fn init_for_seed(model: &dyn Forecaster, seed: u64) -> ParameterSet {
    model.init_params(&mut stream_rng(seed, INIT_STREAM))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let a = AdamConfig::default();
        Self {
            lr: a.lr,
            beta1: a.beta1,
            beta2: a.beta2,
            eps: a.eps,
            batch_size: 32,
            max_epochs: 50,
            patience: 5,
        }
    }
}

impl TrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::config("optimizer.lr", "must be positive"));
        }
        for (key, b) in [("optimizer.beta1", self.beta1), ("optimizer.beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::config(key, "must lie in [0, 1)"));
            }
        }
        if !(self.eps > 0.0) {
            return Err(Error::config("optimizer.eps", "must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("optimizer.batch_size", "must be at least 1"));
        }
        if self.max_epochs == 0 {
            return Err(Error::config("optimizer.max_epochs", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean training loss over the epoch's mini-batches.
    pub train: LossBreakdown,
    pub val_mse: f64,
    pub val_mae: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    /// Parameters of the best validation epoch.
    pub params: ParameterSet,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_mse: f64,
    pub steps: u64,
}

/// Mini-batch Adam optimizer over one model, objective and seed.
pub struct Trainer<'a> {
    model: &'a dyn Forecaster,
    obj: Objective,
    cfg: TrainConfig,
    pub state: TrainState,
    shuffle_rng: ChaCha8Rng,
    noise_rng: ChaCha8Rng,
}

impl<'a> Trainer<'a> {
    pub fn new(model: &'a dyn Forecaster, obj: Objective, cfg: TrainConfig, seed: u64) -> Result<Self> {
        let params = init_for_seed(model, seed);
        Self::with_params(model, obj, cfg, seed, params)
    }

    pub fn with_params(
        model: &'a dyn Forecaster,
        obj: Objective,
        cfg: TrainConfig,
        seed: u64,
        params: ParameterSet,
    ) -> Result<Self> {
        cfg.validate()?;
        Objective::new(obj.lambda, obj.variant)?;
        Ok(Self {
            model,
            obj,
            cfg,
            state: TrainState::new(params, seed),
            shuffle_rng: stream_rng(seed, SHUFFLE_STREAM),
            noise_rng: stream_rng(seed, NOISE_STREAM),
        })
    }

    /// One optimizer step on the windows at `batch`.
    pub fn step(&mut self, windows: &Windows, batch: &[usize], epoch: usize) -> Result<LossBreakdown> {
        let nl = self.model.noise_len() * batch.len();
        let noise: Vec<f64> = (0..nl).map(|_| self.noise_rng.sample(StandardNormal)).collect();
        let step = self.state.step as usize;
        let (loss, grad) = gradients(self.model, &self.state.params, windows, batch, &self.obj, &noise)
            .map_err(|e| match e {
                Error::NonFinite { array } => Error::Diverged {
                    epoch,
                    step,
                    detail: format!("non-finite gradient or loss in `{array}`"),
                },
                Error::NumericOverflow { step: k } => Error::Diverged {
                    epoch,
                    step,
                    detail: format!("recurrent state overflow at position {k}"),
                },
                other => other,
            })?;
        adam_step(&mut self.state, &grad, &self.cfg.adam());
        if let Some(array) = self.state.params.first_non_finite() {
            return Err(Error::Diverged {
                epoch,
                step,
                detail: format!("non-finite parameters in `{array}` after update"),
            });
        }
        Ok(loss)
    }

    /// One pass over shuffled mini-batches; returns the window-weighted mean loss.
    pub fn epoch(&mut self, windows: &Windows, epoch: usize) -> Result<LossBreakdown> {
        if windows.is_empty() {
            return Err(Error::Data("training split has no windows".into()));
        }
        let mut order: Vec<usize> = (0..windows.len()).collect();
        order.shuffle(&mut self.shuffle_rng);
        let mut acc = LossBreakdown::new(0.0, 0.0, self.obj.lambda);
        for batch in order.chunks(self.cfg.batch_size) {
            let l = self.step(windows, batch, epoch)?;
            let w = batch.len() as f64 / order.len() as f64;
            acc.pred += w * l.pred;
            acc.min += w * l.min;
            acc.total += w * l.total;
        }
        Ok(acc)
    }

    /// Runs exactly `steps` optimizer steps, wrapping around epochs as needed.
    pub fn run_steps(&mut self, windows: &Windows, steps: usize) -> Result<()> {
        let mut done = 0;
        let mut epoch = 0;
        while done < steps {
            let mut order: Vec<usize> = (0..windows.len()).collect();
            order.shuffle(&mut self.shuffle_rng);
            for batch in order.chunks(self.cfg.batch_size) {
                if done == steps {
                    break;
                }
                self.step(windows, batch, epoch)?;
                done += 1;
            }
            epoch += 1;
        }
        Ok(())
    }
}

/// Trains with early stopping on validation MSE and returns the best parameters.
pub fn train(
    model: &dyn Forecaster,
    obj: Objective,
    train_windows: &Windows,
    val_windows: &Windows,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<TrainOutcome> {
    if val_windows.is_empty() {
        return Err(Error::Data("validation split has no windows".into()));
    }
    let mut trainer = Trainer::new(model, obj, *cfg, seed)?;
    let mut history = Vec::new();
    let mut best = trainer.state.params.clone();
    let mut best_epoch = 0;
    for epoch in 0..cfg.max_epochs {
        let train_loss = trainer.epoch(train_windows, epoch)?;
        let (val_mse, val_mae) = forecast_errors(model, &trainer.state.params, val_windows)?;
        if !val_mse.is_finite() {
            return Err(Error::Diverged {
                epoch,
                step: trainer.state.step as usize,
                detail: "non-finite validation error".into(),
            });
        }
        log::debug!(
            "{} lambda={} epoch {epoch}: train {:.6} (pred {:.6}, min {:.6}) val mse {val_mse:.6}",
            model.name(),
            obj.lambda,
            train_loss.total,
            train_loss.pred,
            train_loss.min
        );
        history.push(EpochRecord {
            epoch,
            train: train_loss,
            val_mse,
            val_mae,
        });
        if val_mse < trainer.state.best_val_mse {
            trainer.state.best_val_mse = val_mse;
            trainer.state.epochs_since_improvement = 0;
            best.clone_from(&trainer.state.params);
            best_epoch = epoch;
        } else {
            trainer.state.epochs_since_improvement += 1;
            if trainer.state.epochs_since_improvement >= cfg.patience {
                break;
            }
        }
    }
    Ok(TrainOutcome {
        params: best,
        history,
        best_epoch,
        best_val_mse: trainer.state.best_val_mse,
        steps: trainer.state.step,
    })
}

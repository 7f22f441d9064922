use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::engine::backprop::ssm_backward;
use crate::engine::linear::LinearForecaster;
use crate::engine::params::ParameterSet;
use crate::error::{Error, Result};
use crate::objective::{check_lambda, total_loss, LossBreakdown, RegularizerVariant};
use crate::ssm::{forward_weights, ForwardOptions, SsmConfig, SsmWeights};

/// Weight of the minimality term and how it is realized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Objective {
    pub lambda: f64,
    pub variant: RegularizerVariant,
}

impl Objective {
    pub fn new(lambda: f64, variant: RegularizerVariant) -> Result<Self> {
        check_lambda(lambda)?;
        if let RegularizerVariant::Decoder { decoder_weight } = variant {
            if !(decoder_weight >= 0.0 && decoder_weight.is_finite()) {
                return Err(Error::config(
                    "variant.decoder_weight",
                    format!("must be finite and non-negative, got {decoder_weight}"),
                ));
            }
        }
        Ok(Self { lambda, variant })
    }

    pub fn rate(lambda: f64) -> Self {
        Self {
            lambda,
            variant: RegularizerVariant::Rate,
        }
    }
}

/// Gaussian posterior over the bottleneck, `steps x dim` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Posterior {
    pub mu: Vec<f64>,
    /// Absent for deterministic models.
    pub log_sigma: Option<Vec<f64>>,
    pub dim: usize,
}

/// A trainable window-to-horizon forecaster.
///
/// Windows are `(lookback + horizon) x input_channels` row-major blocks; the
/// trailing `horizon` rows hold the targets.
pub trait Forecaster: Sync {
    fn name(&self) -> &'static str;
    fn lookback(&self) -> usize;
    fn horizon(&self) -> usize;
    fn input_channels(&self) -> usize;
    fn targets(&self) -> &[usize];

    fn window_rows(&self) -> usize {
        self.lookback() + self.horizon()
    }

    /// Standard-normal draws consumed by one stochastic training pass.
    fn noise_len(&self) -> usize;

    fn init_params(&self, rng: &mut ChaCha8Rng) -> ParameterSet;

    /// Per-window training loss. `noise = None` uses posterior means.
    fn loss(
        &self,
        params: &ParameterSet,
        window: &[f64],
        obj: &Objective,
        noise: Option<&[f64]>,
    ) -> Result<LossBreakdown>;

    /// Per-window loss, adding `scale * dloss/dparams` into `grad`.
    fn loss_and_grad(
        &self,
        params: &ParameterSet,
        window: &[f64],
        obj: &Objective,
        noise: Option<&[f64]>,
        scale: f64,
        grad: &mut ParameterSet,
    ) -> Result<LossBreakdown>;

    /// Mean-path `horizon x targets` forecast issued after the full lookback.
    fn forecast(&self, params: &ParameterSet, window: &[f64]) -> Result<Vec<f64>>;

    /// Mean-path bottleneck posterior, when the model has one.
    fn posterior(&self, params: &ParameterSet, window: &[f64]) -> Result<Option<Posterior>>;
}

/// The selective state-space forecaster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MpsSsm {
    pub cfg: SsmConfig,
}

impl MpsSsm {
    pub fn new(cfg: SsmConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { cfg })
    }

    fn train_options(&self, obj: &Objective) -> ForwardOptions {
        ForwardOptions {
            decoder: obj.variant.uses_decoder(),
            predict_from: self.cfg.scored_positions().start,
        }
    }
}

impl Forecaster for MpsSsm {
    fn name(&self) -> &'static str {
        "mps_ssm"
    }

    fn lookback(&self) -> usize {
        self.cfg.lookback
    }

    fn horizon(&self) -> usize {
        self.cfg.horizon
    }

    fn input_channels(&self) -> usize {
        self.cfg.input_channels
    }

    fn targets(&self) -> &[usize] {
        &self.cfg.targets
    }

    fn noise_len(&self) -> usize {
        self.cfg.noise_len()
    }

    fn init_params(&self, rng: &mut ChaCha8Rng) -> ParameterSet {
        self.cfg.init_params(rng)
    }

    fn loss(
        &self,
        params: &ParameterSet,
        window: &[f64],
        obj: &Objective,
        noise: Option<&[f64]>,
    ) -> Result<LossBreakdown> {
        let w = SsmWeights::from_params(params, &self.cfg)?;
        let trace = forward_weights(window, &w, &self.cfg, noise, self.train_options(obj))?;
        total_loss(&trace, window, &self.cfg, obj.lambda, &obj.variant)
    }

    fn loss_and_grad(
        &self,
        params: &ParameterSet,
        window: &[f64],
        obj: &Objective,
        noise: Option<&[f64]>,
        scale: f64,
        grad: &mut ParameterSet,
    ) -> Result<LossBreakdown> {
        check_lambda(obj.lambda)?;
        let w = SsmWeights::from_params(params, &self.cfg)?;
        let trace = forward_weights(window, &w, &self.cfg, noise, self.train_options(obj))?;
        ssm_backward(&trace, window, &self.cfg, &w, obj.lambda, &obj.variant, scale, grad)
    }

    fn forecast(&self, params: &ParameterSet, window: &[f64]) -> Result<Vec<f64>> {
        let t = self.cfg.lookback;
        let w = SsmWeights::from_params(params, &self.cfg)?;
        let opts = ForwardOptions {
            decoder: false,
            predict_from: t - 1,
        };
        let trace = forward_weights(window, &w, &self.cfg, None, opts)?;
        Ok(trace.prediction_at(t - 1).to_vec())
    }

    fn posterior(&self, params: &ParameterSet, window: &[f64]) -> Result<Option<Posterior>> {
        let w = SsmWeights::from_params(params, &self.cfg)?;
        let opts = ForwardOptions {
            decoder: false,
            predict_from: self.cfg.lookback,
        };
        let trace = forward_weights(window, &w, &self.cfg, None, opts)?;
        Ok(Some(Posterior {
            mu: trace.mu,
            log_sigma: trace.log_sigma,
            dim: trace.bottleneck_dim,
        }))
    }
}

/// Serializable choice of forecaster, used for configs and checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum ModelSpec {
    MpsSsm(MpsSsm),
    Linear(LinearForecaster),
}

impl ModelSpec {
    pub fn as_forecaster(&self) -> &dyn Forecaster {
        match self {
            ModelSpec::MpsSsm(m) => m,
            ModelSpec::Linear(m) => m,
        }
    }
}

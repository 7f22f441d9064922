//! Direct linear forecaster over the flattened lookback, with an optional
//! Gaussian bottleneck so the same rate penalty can be attached to it.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::engine::model::{Forecaster, Objective, Posterior};
use crate::engine::params::ParameterSet;
use crate::error::{Error, Result};
use crate::linalg::{add_acc, affine, matvec_t_acc, outer_acc};
use crate::objective::{gaussian_kl_to_standard, LossBreakdown, RegularizerVariant};
use crate::ssm::init::uniform_fan_in;
use crate::ssm::{LOG_SIGMA_MAX, LOG_SIGMA_MIN};

pub const LIN_W: &str = "baseline.w_lin";
pub const LIN_B: &str = "baseline.b_lin";
pub const LIN_W_MU: &str = "baseline.w_mu";
pub const LIN_B_MU: &str = "baseline.b_mu";
pub const LIN_W_SIGMA: &str = "baseline.w_sigma";
pub const LIN_B_SIGMA: &str = "baseline.b_sigma";
pub const LIN_W_OUT: &str = "baseline.w_out";

/// `y = W_lin vec(u_{1:T}) + b_lin`, or with a bottleneck
/// `h ~ N(W_mu u + b_mu, exp(W_sigma u + b_sigma)^2)`, `y = W_out h + b_lin`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearForecaster {
    pub input_channels: usize,
    pub targets: Vec<usize>,
    pub lookback: usize,
    pub horizon: usize,
    /// Width of the Gaussian bottleneck; `None` is the plain linear map.
    pub bottleneck_dim: Option<usize>,
    pub stochastic: bool,
}

impl LinearForecaster {
    pub fn plain(input_channels: usize, targets: Vec<usize>, lookback: usize, horizon: usize) -> Self {
        Self {
            input_channels,
            targets,
            lookback,
            horizon,
            bottleneck_dim: None,
            stochastic: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_channels == 0 || self.lookback == 0 || self.horizon == 0 {
            return Err(Error::config("lookback", "linear baseline dimensions must be positive"));
        }
        if self.targets.is_empty() || self.targets.iter().any(|&t| t >= self.input_channels) {
            return Err(Error::config("targets", "invalid target channels for linear baseline"));
        }
        if self.bottleneck_dim == Some(0) {
            return Err(Error::config("bottleneck_dim", "must be at least 1"));
        }
        Ok(())
    }

    fn inputs(&self) -> usize {
        self.lookback * self.input_channels
    }

    fn outputs(&self) -> usize {
        self.horizon * self.targets.len()
    }

    fn check_window(&self, window: &[f64]) -> Result<()> {
        let len = self.window_rows() * self.input_channels;
        if window.len() < len {
            return Err(Error::dim("window", len, window.len()));
        }
        Ok(())
    }

    fn check_variant(obj: &Objective) -> Result<()> {
        if obj.variant != RegularizerVariant::Rate {
            return Err(Error::config(
                "variant",
                "the linear baseline supports only the rate regularizer",
            ));
        }
        Ok(())
    }

    fn target_row(&self, window: &[f64]) -> Vec<f64> {
        let m = self.input_channels;
        let mut y = Vec::with_capacity(self.outputs());
        for i in 0..self.horizon {
            for &ch in &self.targets {
                y.push(window[(self.lookback + i) * m + ch]);
            }
        }
        y
    }

    /// Returns `(prediction, bottleneck state)` where the state holds
    /// `(mu, log_sigma raw, log_sigma clamped, h)`.
    fn run(
        &self,
        params: &ParameterSet,
        x: &[f64],
        noise: Option<&[f64]>,
    ) -> Result<(Vec<f64>, Option<[Vec<f64>; 4]>)> {
        let (n_in, out) = (self.inputs(), self.outputs());
        let b = params.get_sized(LIN_B, out)?;
        match self.bottleneck_dim {
            None => {
                let w = params.get_sized(LIN_W, out * n_in)?;
                Ok((affine(w, Some(b), x, out), None))
            }
            Some(hd) => {
                let mu = affine(params.get_sized(LIN_W_MU, hd * n_in)?, Some(params.get_sized(LIN_B_MU, hd)?), x, hd);
                let raw = affine(
                    params.get_sized(LIN_W_SIGMA, hd * n_in)?,
                    Some(params.get_sized(LIN_B_SIGMA, hd)?),
                    x,
                    hd,
                );
                let ls: Vec<f64> = raw.iter().map(|v| v.clamp(LOG_SIGMA_MIN, LOG_SIGMA_MAX)).collect();
                let noise = if self.stochastic { noise } else { None };
                if let Some(n) = noise {
                    if n.len() != hd {
                        return Err(Error::dim("noise", hd, n.len()));
                    }
                }
                let h: Vec<f64> = (0..hd)
                    .map(|j| mu[j] + noise.map_or(0.0, |n| ls[j].exp() * n[j]))
                    .collect();
                let y = affine(params.get_sized(LIN_W_OUT, out * hd)?, Some(b), &h, out);
                Ok((y, Some([mu, raw, ls, h])))
            }
        }
    }

    fn rate(&self, state: &Option<[Vec<f64>; 4]>) -> f64 {
        match state {
            None => 0.0,
            Some([mu, _, ls, _]) if self.stochastic => gaussian_kl_to_standard(mu, ls),
            Some([mu, ..]) => 0.5 * mu.iter().map(|v| v * v).sum::<f64>(),
        }
    }
}

fn mse(pred: &[f64], y: &[f64]) -> f64 {
    pred.iter().zip(y).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / y.len() as f64
}

impl Forecaster for LinearForecaster {
    fn name(&self) -> &'static str {
        "linear"
    }

    fn lookback(&self) -> usize {
        self.lookback
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn input_channels(&self) -> usize {
        self.input_channels
    }

    fn targets(&self) -> &[usize] {
        &self.targets
    }

    fn noise_len(&self) -> usize {
        match self.bottleneck_dim {
            Some(hd) if self.stochastic => hd,
            _ => 0,
        }
    }

    fn init_params(&self, rng: &mut ChaCha8Rng) -> ParameterSet {
        let (n_in, out) = (self.inputs(), self.outputs());
        let mut p = ParameterSet::new();
        match self.bottleneck_dim {
            None => p.push(LIN_W, &[out, n_in], uniform_fan_in(rng, out * n_in, n_in)),
            Some(hd) => {
                p.push(LIN_W_MU, &[hd, n_in], uniform_fan_in(rng, hd * n_in, n_in));
                p.push(LIN_B_MU, &[hd], vec![0.0; hd]);
                p.push(LIN_W_SIGMA, &[hd, n_in], uniform_fan_in(rng, hd * n_in, n_in));
                p.push(LIN_B_SIGMA, &[hd], vec![0.0; hd]);
                p.push(LIN_W_OUT, &[out, hd], uniform_fan_in(rng, out * hd, hd));
            }
        }
        p.push(LIN_B, &[out], vec![0.0; out]);
        p
    }

    fn loss(
        &self,
        params: &ParameterSet,
        window: &[f64],
        obj: &Objective,
        noise: Option<&[f64]>,
    ) -> Result<LossBreakdown> {
        Self::check_variant(obj)?;
        self.check_window(window)?;
        let (pred, state) = self.run(params, &window[..self.inputs()], noise)?;
        let y = self.target_row(window);
        Ok(LossBreakdown::new(mse(&pred, &y), self.rate(&state), obj.lambda))
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
        Self::check_variant(obj)?;
        self.check_window(window)?;
        let x = &window[..self.inputs()];
        let (pred, state) = self.run(params, x, noise)?;
        let y = self.target_row(window);
        let out = y.len();
        let dy: Vec<f64> = pred
            .iter()
            .zip(&y)
            .map(|(p, t)| 2.0 * scale * (p - t) / out as f64)
            .collect();
        add_acc(grad.get_mut(LIN_B)?, &dy);
        match (&state, self.bottleneck_dim) {
            (None, _) | (_, None) => outer_acc(grad.get_mut(LIN_W)?, &dy, x),
            (Some([mu, raw, ls, h]), Some(hd)) => {
                outer_acc(grad.get_mut(LIN_W_OUT)?, &dy, h);
                let mut g_h = vec![0.0; hd];
                matvec_t_acc(params.get(LIN_W_OUT)?, &dy, &mut g_h);
                let c = scale * obj.lambda;
                let noise = if self.stochastic { noise } else { None };
                let mut g_mu = vec![0.0; hd];
                let mut g_raw = vec![0.0; hd];
                for j in 0..hd {
                    g_mu[j] = g_h[j] + c * mu[j];
                    if self.stochastic {
                        let sigma = ls[j].exp();
                        let mut g_ls = noise.map_or(0.0, |n| g_h[j] * sigma * n[j]);
                        g_ls += c * (sigma * sigma - 1.0);
                        if (LOG_SIGMA_MIN..=LOG_SIGMA_MAX).contains(&raw[j]) {
                            g_raw[j] = g_ls;
                        }
                    }
                }
                outer_acc(grad.get_mut(LIN_W_MU)?, &g_mu, x);
                add_acc(grad.get_mut(LIN_B_MU)?, &g_mu);
                outer_acc(grad.get_mut(LIN_W_SIGMA)?, &g_raw, x);
                add_acc(grad.get_mut(LIN_B_SIGMA)?, &g_raw);
            }
        }
        Ok(LossBreakdown::new(mse(&pred, &y), self.rate(&state), obj.lambda))
    }

    fn forecast(&self, params: &ParameterSet, window: &[f64]) -> Result<Vec<f64>> {
        if window.len() < self.inputs() {
            return Err(Error::dim("window", self.inputs(), window.len()));
        }
        Ok(self.run(params, &window[..self.inputs()], None)?.0)
    }

    fn posterior(&self, params: &ParameterSet, window: &[f64]) -> Result<Option<Posterior>> {
        if window.len() < self.inputs() {
            return Err(Error::dim("window", self.inputs(), window.len()));
        }
        let (_, state) = self.run(params, &window[..self.inputs()], None)?;
        Ok(state.map(|[mu, _, ls, _]| Posterior {
            dim: mu.len(),
            mu,
            log_sigma: self.stochastic.then_some(ls),
        }))
    }
}

//! Training objective: multi-horizon prediction loss plus a weighted
//! minimality penalty on the bottleneck, and the clean-vs-perturbed state
//! divergence used to probe invariance to non-causal noise.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ssm::{ForwardTrace, SsmConfig};

/// Loss terms of one evaluation; `total = pred + lambda * min`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub pred: f64,
    pub min: f64,
    pub total: f64,
    pub lambda: f64,
}

impl LossBreakdown {
    pub fn new(pred: f64, min: f64, lambda: f64) -> Self {
        Self {
            pred,
            min,
            total: pred + lambda * min,
            lambda,
        }
    }

    /// Mean of several breakdowns sharing one lambda.
    pub fn mean(items: &[LossBreakdown]) -> Self {
        let n = items.len().max(1) as f64;
        let lambda = items.first().map_or(0.0, |b| b.lambda);
        let pred = items.iter().map(|b| b.pred).sum::<f64>() / n;
        let min = items.iter().map(|b| b.min).sum::<f64>() / n;
        let total = items.iter().map(|b| b.total).sum::<f64>() / n;
        Self {
            pred,
            min,
            total,
            lambda,
        }
    }
}

/// How the minimality term is realized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RegularizerVariant {
    /// KL of the Gaussian state posterior to a standard-normal prior.
    Rate,
    /// Rate term plus a weighted reconstruction loss of the auxiliary decoder.
    Decoder { decoder_weight: f64 },
}

impl Default for RegularizerVariant {
    fn default() -> Self {
        RegularizerVariant::Rate
    }
}

impl RegularizerVariant {
    pub fn uses_decoder(&self) -> bool {
        matches!(self, RegularizerVariant::Decoder { .. })
    }

    pub fn name(&self) -> &'static str {
        match self {
            RegularizerVariant::Rate => "rate",
            RegularizerVariant::Decoder { .. } => "decoder",
        }
    }
}

fn target_value(window: &[f64], channels: usize, row: usize, col: usize) -> f64 {
    window[row * channels + col]
}

/// Mean squared forecast error over scored positions, horizon steps and
/// target channels.
pub fn prediction_loss(trace: &ForwardTrace, window: &[f64], cfg: &SsmConfig) -> Result<f64> {
    let positions = cfg.scored_positions();
    if positions.is_empty() {
        return Err(Error::config("warmup", "no scorable position"));
    }
    if positions.start < trace.predicted_from {
        return Err(Error::config(
            "predicted_from",
            "trace lacks forecasts for scored positions",
        ));
    }
    if window.len() < cfg.window_len() {
        return Err(Error::dim("window", cfg.window_len(), window.len()));
    }
    let m = cfg.input_channels;
    let mo = cfg.output_channels();
    let count = positions.len() * cfg.horizon * mo;
    let mut sum = 0.0;
    for k in positions {
        let pred = trace.prediction_at(k);
        for i in 0..cfg.horizon {
            for (c, &ch) in cfg.targets.iter().enumerate() {
                let diff = pred[i * mo + c] - target_value(window, m, k + 1 + i, ch);
                sum += diff * diff;
            }
        }
    }
    Ok(sum / count as f64)
}

/// `KL(N(mu, diag sigma^2) || N(0, I))` for one step, summed over dimensions.
pub fn gaussian_kl_to_standard(mu: &[f64], log_sigma: &[f64]) -> f64 {
    mu.iter()
        .zip(log_sigma)
        .map(|(&m, &ls)| 0.5 * (m * m + (2.0 * ls).exp() - 1.0 - 2.0 * ls))
        .sum()
}

/// `KL(N(mu_p, sigma_p^2) || N(mu_q, sigma_q^2))` summed over diagonal dimensions.
pub fn diag_gaussian_kl(mu_p: &[f64], ls_p: &[f64], mu_q: &[f64], ls_q: &[f64]) -> f64 {
    let mut kl = 0.0;
    for i in 0..mu_p.len() {
        let var_ratio = (2.0 * (ls_p[i] - ls_q[i])).exp();
        let diff = mu_p[i] - mu_q[i];
        kl += ls_q[i] - ls_p[i] + 0.5 * (var_ratio + diff * diff * (-2.0 * ls_q[i]).exp()) - 0.5;
    }
    kl
}

/// Mean over steps of the posterior's KL to the standard-normal prior.
///
/// Without log-stds (deterministic mode) the unit-variance surrogate
/// `0.5 * |mu|^2` is used.
pub fn rate_term(mu: &[f64], log_sigma: Option<&[f64]>, bottleneck_dim: usize) -> f64 {
    let h = bottleneck_dim;
    let steps = mu.len() / h;
    if steps == 0 {
        return 0.0;
    }
    let mut sum = 0.0;
    for k in 0..steps {
        let m = &mu[k * h..(k + 1) * h];
        sum += match log_sigma {
            Some(ls) => gaussian_kl_to_standard(m, &ls[k * h..(k + 1) * h]),
            None => 0.5 * m.iter().map(|v| v * v).sum::<f64>(),
        };
    }
    sum / steps as f64
}

/// Mean over steps of the squared reconstruction error `|dec(h_k) - u_k|^2`.
pub fn decoder_term(
    trace: &ForwardTrace,
    window: &[f64],
    cfg: &SsmConfig,
    variant: &RegularizerVariant,
) -> Result<f64> {
    if !variant.uses_decoder() {
        return Err(Error::config(
            "variant",
            "decoder term requested under the rate-only regularizer",
        ));
    }
    let recon = trace
        .recon
        .as_ref()
        .ok_or_else(|| Error::config("variant", "trace was produced without the decoder"))?;
    let m = cfg.input_channels;
    let t = trace.steps;
    let sum: f64 = recon
        .iter()
        .zip(&window[..t * m])
        .map(|(r, u)| (r - u) * (r - u))
        .sum();
    Ok(sum / t as f64)
}

/// Minimality term for the configured variant.
pub fn minimality_loss(
    trace: &ForwardTrace,
    window: &[f64],
    cfg: &SsmConfig,
    variant: &RegularizerVariant,
) -> Result<f64> {
    let rate = rate_term(&trace.mu, trace.log_sigma.as_deref(), trace.bottleneck_dim);
    match variant {
        RegularizerVariant::Rate => Ok(rate),
        RegularizerVariant::Decoder { decoder_weight } => {
            Ok(rate + decoder_weight * decoder_term(trace, window, cfg, variant)?)
        }
    }
}

/// `pred + lambda * min` for one window.
pub fn total_loss(
    trace: &ForwardTrace,
    window: &[f64],
    cfg: &SsmConfig,
    lambda: f64,
    variant: &RegularizerVariant,
) -> Result<LossBreakdown> {
    check_lambda(lambda)?;
    let pred = prediction_loss(trace, window, cfg)?;
    let min = minimality_loss(trace, window, cfg, variant)?;
    Ok(LossBreakdown::new(pred, min, lambda))
}

pub fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::config(
            "lambda",
            format!("lambda must be finite and non-negative, got {lambda}"),
        ));
    }
    Ok(())
}

/// Mean over steps of `KL(p(h_k | perturbed) || p(h_k | clean))`.
///
/// Deterministic traces (no log-stds) use the unit-variance form
/// `0.5 * |mu_p - mu_q|^2`.
pub fn state_invariance_kl(clean: &ForwardTrace, perturbed: &ForwardTrace) -> Result<f64> {
    if clean.steps != perturbed.steps || clean.bottleneck_dim != perturbed.bottleneck_dim {
        return Err(Error::dim("perturbed trace steps", clean.steps, perturbed.steps));
    }
    posterior_sequence_kl(
        &perturbed.mu,
        perturbed.log_sigma.as_deref(),
        &clean.mu,
        clean.log_sigma.as_deref(),
        clean.bottleneck_dim,
    )
}

/// Step-averaged KL between two posterior sequences (`p` relative to `q`).
pub fn posterior_sequence_kl(
    mu_p: &[f64],
    ls_p: Option<&[f64]>,
    mu_q: &[f64],
    ls_q: Option<&[f64]>,
    dim: usize,
) -> Result<f64> {
    if mu_p.len() != mu_q.len() || dim == 0 {
        return Err(Error::dim("posterior sequence", mu_q.len(), mu_p.len()));
    }
    let steps = mu_p.len() / dim;
    if steps == 0 {
        return Ok(0.0);
    }
    let mut sum = 0.0;
    for k in 0..steps {
        let r = k * dim..(k + 1) * dim;
        sum += match (ls_p, ls_q) {
            (Some(lp), Some(lq)) => {
                diag_gaussian_kl(&mu_p[r.clone()], &lp[r.clone()], &mu_q[r.clone()], &lq[r])
            }
            // Point posteriors: the unit-variance Gaussian KL.
            _ => {
                0.5 * mu_p[r.clone()]
                    .iter()
                    .zip(&mu_q[r])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
            }
        };
    }
    Ok(sum / steps as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ssm::{forward_with, ForwardOptions};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn trace_with_predictions(cfg: &SsmConfig, preds: Vec<f64>) -> ForwardTrace {
        let p = cfg.init_params(&mut ChaCha8Rng::seed_from_u64(0));
        let mut tr = forward_with(
            &vec![0.0; cfg.window_len()],
            &p,
            cfg,
            None,
            ForwardOptions::default(),
        )
        .unwrap();
        tr.predictions = preds;
        tr
    }

    #[test]
    fn perfect_predictions_have_zero_loss() {
        let cfg = SsmConfig {
            embed_dim: 2,
            state_dim: 2,
            bottleneck_dim: 2,
            warmup: 0,
            ..SsmConfig::new(1, 3, 1)
        };
        let window = vec![0.0, 1.0, 2.0, 3.0];
        let tr = trace_with_predictions(&cfg, vec![1.0, 2.0, 3.0]);
        assert_eq!(prediction_loss(&tr, &window, &cfg).unwrap(), 0.0);
    }

    #[test]
    fn single_position_hand_sum() {
        let cfg = SsmConfig {
            embed_dim: 2,
            state_dim: 2,
            bottleneck_dim: 2,
            multi_position_loss: false,
            ..SsmConfig::new(2, 1, 1)
        };
        let window = vec![9.0, 9.0, 0.0, 0.0];
        let tr = trace_with_predictions(&cfg, vec![1.0, 2.0]);
        assert_eq!(prediction_loss(&tr, &window, &cfg).unwrap(), 2.5);
    }

    #[test]
    fn prediction_loss_matches_triple_loop_oracle() {
        let cfg = SsmConfig {
            embed_dim: 3,
            state_dim: 3,
            bottleneck_dim: 3,
            warmup: 1,
            ..SsmConfig::new(2, 6, 2)
        };
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let window: Vec<f64> = (0..cfg.window_len()).map(|_| rng.random_range(-2.0..2.0)).collect();
        let preds: Vec<f64> = (0..6 * 2 * 2).map(|_| rng.random_range(-2.0..2.0)).collect();
        let tr = trace_with_predictions(&cfg, preds.clone());

        let mut sum = 0.0;
        let mut n = 0usize;
        for k in 1..6 {
            for i in 0..2 {
                for c in 0..2 {
                    let yhat = preds[k * 4 + i * 2 + c];
                    let y = window[(k + 1 + i) * 2 + c];
                    sum += (yhat - y).powi(2);
                    n += 1;
                }
            }
        }
        let got = prediction_loss(&tr, &window, &cfg).unwrap();
        assert!((got - sum / n as f64).abs() < 1e-12);
    }

    #[test]
    fn prediction_loss_is_permutation_invariant_over_positions() {
        let cfg = SsmConfig {
            embed_dim: 2,
            state_dim: 2,
            bottleneck_dim: 2,
            warmup: 0,
            ..SsmConfig::new(1, 4, 1)
        };
        let window = vec![0.0, 0.5, -1.0, 2.0, 3.0];
        let base = vec![1.0, 2.0, 0.0, -1.0];
        // Swap forecasts and targets of positions 0 and 2 together.
        let swapped_window = vec![0.0, 2.0, -1.0, 0.5, 3.0];
        let swapped = vec![0.0, 2.0, 1.0, -1.0];
        let a = prediction_loss(&trace_with_predictions(&cfg, base), &window, &cfg).unwrap();
        let b = prediction_loss(&trace_with_predictions(&cfg, swapped), &swapped_window, &cfg)
            .unwrap();
        assert!((a - b).abs() < 1e-15);
    }

    #[test]
    fn rate_term_closed_forms() {
        assert_eq!(rate_term(&[0.0, 0.0], Some(&[0.0, 0.0]), 2), 0.0);
        assert_eq!(rate_term(&[1.0], Some(&[0.0]), 1), 0.5);
        let ls = 0.5f64.ln();
        let expected = 0.5 * (0.25 - 1.0 - 2.0 * ls);
        let got = rate_term(&[0.0], Some(&[ls]), 1);
        assert!((got - expected).abs() < 1e-15);
        assert!((got - 0.318147).abs() < 1e-6);
        assert_eq!(rate_term(&[2.0, 0.0], None, 2), 2.0);
    }

    #[test]
    fn total_loss_composition() {
        let b = LossBreakdown::new(0.4, 0.1, 2.0);
        assert!((b.total - 0.6).abs() < 1e-15);
        let b = LossBreakdown::new(0.4, 0.1, 0.0);
        assert_eq!(b.total, b.pred);
        for lambda in [0.0, 0.01, 0.1, 1.0, 2.0, 5.0, 10.0, 100.0, 1000.0, 1e9] {
            assert!(check_lambda(lambda).is_ok());
        }
        assert!(check_lambda(-0.1).is_err());
        assert!(check_lambda(f64::NAN).is_err());
    }

    #[test]
    fn decoder_term_requires_decoder_variant() {
        let cfg = SsmConfig {
            embed_dim: 2,
            state_dim: 2,
            bottleneck_dim: 2,
            ..SsmConfig::new(1, 4, 1)
        };
        let tr = trace_with_predictions(&cfg, vec![0.0; 4]);
        let err = decoder_term(&tr, &[0.0; 5], &cfg, &RegularizerVariant::Rate).unwrap_err();
        assert!(err.is_config());
    }

    #[test]
    fn decoder_term_with_bias_only_decoder() {
        let cfg = SsmConfig {
            embed_dim: 2,
            state_dim: 2,
            bottleneck_dim: 2,
            ..SsmConfig::new(2, 3, 1)
        };
        let mut p = cfg.init_params(&mut ChaCha8Rng::seed_from_u64(0));
        p.get_mut(crate::ssm::names::DEC_W2).unwrap().fill(0.0);
        p.get_mut(crate::ssm::names::DEC_B2).unwrap().copy_from_slice(&[1.0, -1.0]);
        let window = vec![0.0, 0.0, 1.0, 1.0, 2.0, -1.0, 5.0, 5.0];
        let tr = forward_with(
            &window,
            &p,
            &cfg,
            None,
            ForwardOptions {
                decoder: true,
                predict_from: 0,
            },
        )
        .unwrap();
        let variant = RegularizerVariant::Decoder { decoder_weight: 1.0 };
        let got = decoder_term(&tr, &window, &cfg, &variant).unwrap();
        // |b - u_k|^2 for u = (0,0), (1,1), (2,-1): 2, 4, 1.
        assert!((got - 7.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn invariance_kl_closed_forms() {
        assert_eq!(
            posterior_sequence_kl(&[0.3, 1.0], Some(&[0.1, -0.2]), &[0.3, 1.0], Some(&[0.1, -0.2]), 1)
                .unwrap(),
            0.0
        );
        let kl = posterior_sequence_kl(&[1.0], Some(&[0.0]), &[0.0], Some(&[0.0]), 1).unwrap();
        assert_eq!(kl, 0.5);
        let kl = posterior_sequence_kl(&[1.0, 3.0], None, &[0.0, 1.0], None, 2).unwrap();
        assert_eq!(kl, 2.5);
        assert!(posterior_sequence_kl(&[1.0], None, &[0.0, 1.0], None, 1).is_err());
    }
}

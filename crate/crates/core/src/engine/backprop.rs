//! Reverse-mode gradients of the state-space forecaster's per-window loss.
//!
//! Adjoints are propagated by hand through the prediction head, the
//! auxiliary decoder, the reparameterized sample, the clamped posterior
//! head, the sequential scan (carrying `dL/dH_k` backwards in time), the
//! ZOH discretization, the selection gate and the embedding.

use crate::engine::params::ParameterSet;
use crate::error::Result;
use crate::linalg::{add_acc, matvec_t_acc, outer_acc};
use crate::objective::{minimality_loss, prediction_loss, LossBreakdown, RegularizerVariant};
use crate::ssm::names::*;
use crate::ssm::{state_rates, ForwardTrace, SsmConfig, SsmWeights, LOG_SIGMA_MAX, LOG_SIGMA_MIN};

/// `d/da [expm1(delta a) / a]`, stable for small `|delta a|`.
#[inline]
pub(crate) fn gain_rate_derivative(a: f64, delta: f64, a_bar: f64, gain: f64) -> f64 {
    let x = delta * a;
    if x.abs() < 1e-4 {
        // delta^2 * (e^x - expm1(x)/x) / x, expanded around x = 0.
        delta * delta * (0.5 + x * (1.0 / 3.0 + x * (1.0 / 8.0 + x / 30.0)))
    } else {
        (delta * a_bar - gain) / a
    }
}

struct Grads {
    embed_w: Vec<f64>,
    embed_b: Vec<f64>,
    w_delta: Vec<f64>,
    b_delta: Vec<f64>,
    w_b: Vec<f64>,
    w_c: Vec<f64>,
    a_log: Vec<f64>,
    skip_d: Vec<f64>,
    w_mu: Vec<f64>,
    b_mu: Vec<f64>,
    w_sigma: Vec<f64>,
    b_sigma: Vec<f64>,
    head_w: Vec<f64>,
    head_b: Vec<f64>,
    dec_w1: Vec<f64>,
    dec_b1: Vec<f64>,
    dec_w2: Vec<f64>,
    dec_b2: Vec<f64>,
}

impl Grads {
    fn zeros(w: &SsmWeights<'_>) -> Self {
        Self {
            embed_w: vec![0.0; w.embed.w.len()],
            embed_b: vec![0.0; w.embed.b.len()],
            w_delta: vec![0.0; w.gate.w_delta.len()],
            b_delta: vec![0.0; w.gate.b_delta.len()],
            w_b: vec![0.0; w.gate.w_b.len()],
            w_c: vec![0.0; w.gate.w_c.len()],
            a_log: vec![0.0; w.a_log.len()],
            skip_d: vec![0.0; w.skip_d.len()],
            w_mu: vec![0.0; w.posterior.w_mu.len()],
            b_mu: vec![0.0; w.posterior.b_mu.len()],
            w_sigma: vec![0.0; w.posterior.w_sigma.len()],
            b_sigma: vec![0.0; w.posterior.b_sigma.len()],
            head_w: vec![0.0; w.head.w.len()],
            head_b: vec![0.0; w.head.b.len()],
            dec_w1: vec![0.0; w.decoder.w1.len()],
            dec_b1: vec![0.0; w.decoder.b1.len()],
            dec_w2: vec![0.0; w.decoder.w2.len()],
            dec_b2: vec![0.0; w.decoder.b2.len()],
        }
    }

    fn accumulate_into(self, grad: &mut ParameterSet) -> Result<()> {
        let pairs = [
            (EMBED_W, self.embed_w),
            (EMBED_B, self.embed_b),
            (GATE_W_DELTA, self.w_delta),
            (GATE_B_DELTA, self.b_delta),
            (GATE_W_B, self.w_b),
            (GATE_W_C, self.w_c),
            (A_LOG, self.a_log),
            (SKIP_D, self.skip_d),
            (POST_W_MU, self.w_mu),
            (POST_B_MU, self.b_mu),
            (POST_W_SIGMA, self.w_sigma),
            (POST_B_SIGMA, self.b_sigma),
            (HEAD_W, self.head_w),
            (HEAD_B, self.head_b),
            (DEC_W1, self.dec_w1),
            (DEC_B1, self.dec_b1),
            (DEC_W2, self.dec_w2),
            (DEC_B2, self.dec_b2),
        ];
        for (name, g) in pairs {
            add_acc(grad.get_mut(name)?, &g);
        }
        Ok(())
    }
}

/// Adds `scale * dL/dtheta` for one window into `grad` and returns the loss.
///
/// `trace` must come from the same parameters and window, with forecasts at
/// every scored position and decoder outputs when the variant uses them.
pub(crate) fn ssm_backward(
    trace: &ForwardTrace,
    window: &[f64],
    cfg: &SsmConfig,
    w: &SsmWeights<'_>,
    lambda: f64,
    variant: &RegularizerVariant,
    scale: f64,
    grad: &mut ParameterSet,
) -> Result<LossBreakdown> {
    let pred = prediction_loss(trace, window, cfg)?;
    let min = minimality_loss(trace, window, cfg, variant)?;
    let loss = LossBreakdown::new(pred, min, lambda);

    let (t, m, e, d, hd) = (
        cfg.lookback,
        cfg.input_channels,
        cfg.embed_dim,
        cfg.state_dim,
        cfg.bottleneck_dim,
    );
    let mo = cfg.output_channels();
    let tau = cfg.horizon;
    let out = tau * mo;
    let mut g = Grads::zeros(w);

    // Prediction head.
    let mut g_h = vec![0.0; t * hd];
    let positions = cfg.scored_positions();
    let coef = 2.0 * scale / (positions.len() * out) as f64;
    let mut dy = vec![0.0; out];
    for k in positions {
        let pred_k = trace.prediction_at(k);
        for i in 0..tau {
            for (c, &ch) in cfg.targets.iter().enumerate() {
                let y = window[(k + 1 + i) * m + ch];
                dy[i * mo + c] = coef * (pred_k[i * mo + c] - y);
            }
        }
        let h_k = &trace.h[k * hd..(k + 1) * hd];
        outer_acc(&mut g.head_w, &dy, h_k);
        add_acc(&mut g.head_b, &dy);
        matvec_t_acc(w.head.w, &dy, &mut g_h[k * hd..(k + 1) * hd]);
    }

    // Auxiliary decoder.
    if let RegularizerVariant::Decoder { decoder_weight } = *variant {
        let recon = trace.recon.as_ref().expect("decoder trace");
        let hidden = trace.dec_hidden.as_ref().expect("decoder trace");
        let width = w.decoder.b1.len();
        let c = scale * lambda * decoder_weight * 2.0 / t as f64;
        let mut dr = vec![0.0; m];
        let mut da = vec![0.0; width];
        for k in 0..t {
            for j in 0..m {
                dr[j] = c * (recon[k * m + j] - window[k * m + j]);
            }
            let hid = &hidden[k * width..(k + 1) * width];
            outer_acc(&mut g.dec_w2, &dr, hid);
            add_acc(&mut g.dec_b2, &dr);
            da.iter_mut().for_each(|v| *v = 0.0);
            matvec_t_acc(w.decoder.w2, &dr, &mut da);
            for (a, z) in da.iter_mut().zip(hid) {
                *a *= 1.0 - z * z;
            }
            let h_k = &trace.h[k * hd..(k + 1) * hd];
            outer_acc(&mut g.dec_w1, &da, h_k);
            add_acc(&mut g.dec_b1, &da);
            matvec_t_acc(w.decoder.w1, &da, &mut g_h[k * hd..(k + 1) * hd]);
        }
    }

    // Reparameterized sample and rate term.
    let rate_coef = scale * lambda / t as f64;
    let mut g_mu = g_h.clone();
    let mut g_ls_raw = vec![0.0; t * hd];
    match (&trace.log_sigma, &trace.log_sigma_raw) {
        (Some(ls), Some(raw)) => {
            for j in 0..t * hd {
                let sigma = ls[j].exp();
                let mut g_ls = match &trace.noise {
                    Some(n) => g_h[j] * sigma * n[j],
                    None => 0.0,
                };
                g_mu[j] += rate_coef * trace.mu[j];
                g_ls += rate_coef * (sigma * sigma - 1.0);
                if (LOG_SIGMA_MIN..=LOG_SIGMA_MAX).contains(&raw[j]) {
                    g_ls_raw[j] = g_ls;
                }
            }
        }
        _ => {
            for j in 0..t * hd {
                g_mu[j] += rate_coef * trace.mu[j];
            }
        }
    }

    // Posterior head.
    let stochastic = trace.log_sigma.is_some();
    let mut g_o = vec![0.0; t * e];
    for k in 0..t {
        let o_k = &trace.outputs[k * e..(k + 1) * e];
        let gm = &g_mu[k * hd..(k + 1) * hd];
        outer_acc(&mut g.w_mu, gm, o_k);
        add_acc(&mut g.b_mu, gm);
        let go = &mut g_o[k * e..(k + 1) * e];
        matvec_t_acc(w.posterior.w_mu, gm, go);
        if stochastic {
            let gs = &g_ls_raw[k * hd..(k + 1) * hd];
            outer_acc(&mut g.w_sigma, gs, o_k);
            add_acc(&mut g.b_sigma, gs);
            matvec_t_acc(w.posterior.w_sigma, gs, go);
        }
    }

    // Scan, discretization and gate, newest step first.
    let a = state_rates(w.a_log);
    let mut g_a = vec![0.0; d];
    let mut carry = vec![0.0; e * d];
    let mut g_x = vec![0.0; t * e];
    let zeros = vec![0.0; e * d];
    let mut g_delta = vec![0.0; e];
    let mut g_bin = vec![0.0; d];
    let mut g_c = vec![0.0; d];
    for k in (0..t).rev() {
        let gate = &trace.gate[k];
        let x_k = &trace.embedded[k * e..(k + 1) * e];
        let h_k = trace.state_at(k);
        let h_prev = if k > 0 { trace.state_at(k - 1) } else { &zeros[..] };
        let ab_k = &trace.a_bar[k * e * d..(k + 1) * e * d];
        let gain_k = &trace.gain[k * e * d..(k + 1) * e * d];
        g_delta.iter_mut().for_each(|v| *v = 0.0);
        g_bin.iter_mut().for_each(|v| *v = 0.0);
        g_c.iter_mut().for_each(|v| *v = 0.0);
        for ch in 0..e {
            let go = g_o[k * e + ch];
            let xin = x_k[ch];
            let delta = gate.delta[ch];
            g.skip_d[ch] += go * xin;
            let mut gx = go * w.skip_d[ch];
            let mut gd = 0.0;
            for s in 0..d {
                let idx = ch * d + s;
                g_c[s] += go * h_k[idx];
                let gv = carry[idx] + go * gate.c_out[s];
                let ab = ab_k[idx];
                let f = gain_k[idx];
                let b = gate.b_in[s];
                let d_ab = gv * h_prev[idx];
                let d_bb = gv * xin;
                gx += gv * f * b;
                gd += d_ab * ab * a[s] + d_bb * b * ab;
                g_a[s] += d_ab * ab * delta + d_bb * b * gain_rate_derivative(a[s], delta, ab, f);
                g_bin[s] += d_bb * f;
                carry[idx] = gv * ab;
            }
            g_x[k * e + ch] += gx;
            g_delta[ch] = gd;
        }
        // softplus'(z) = 1 - exp(-softplus(z)).
        for (gd, &delta) in g_delta.iter_mut().zip(&gate.delta) {
            *gd *= -(-delta).exp_m1();
        }
        outer_acc(&mut g.w_delta, &g_delta, x_k);
        add_acc(&mut g.b_delta, &g_delta);
        outer_acc(&mut g.w_b, &g_bin, x_k);
        outer_acc(&mut g.w_c, &g_c, x_k);
        let gx_k = &mut g_x[k * e..(k + 1) * e];
        matvec_t_acc(w.gate.w_delta, &g_delta, gx_k);
        matvec_t_acc(w.gate.w_b, &g_bin, gx_k);
        matvec_t_acc(w.gate.w_c, &g_c, gx_k);
    }
    for (ga, (gl, &av)) in g_a.iter().zip(g.a_log.iter_mut().zip(&a)) {
        *gl += ga * av;
    }

    // Embedding.
    for k in 0..t {
        let gx_k = &g_x[k * e..(k + 1) * e];
        outer_acc(&mut g.embed_w, gx_k, &window[k * m..(k + 1) * m]);
        add_acc(&mut g.embed_b, gx_k);
    }

    g.accumulate_into(grad)?;
    Ok(loss)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gain_derivative_series_matches_direct_form() {
        for &(a, delta) in &[(-0.5, 1e-4), (-2.0, 4e-5), (-1.0, 9e-5)] {
            let x: f64 = delta * a;
            let em = x.exp_m1();
            let (ab, f) = (em + 1.0, em / a);
            let direct = (delta * ab - f) / a;
            let series = gain_rate_derivative(a, delta, ab, f);
            assert!((direct - series).abs() <= 1e-9 * series.abs(), "{direct} {series}");
        }
    }

    #[test]
    fn gain_derivative_matches_central_difference() {
        let (a, delta) = (-1.7, 0.3);
        let f = |a: f64| (delta * a).exp_m1() / a;
        let h = 1e-6;
        let fd = (f(a + h) - f(a - h)) / (2.0 * h);
        let em = (delta * a).exp_m1();
        let got = gain_rate_derivative(a, delta, em + 1.0, em / a);
        assert!((fd - got).abs() < 1e-9);
    }
}

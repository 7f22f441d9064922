//! Selective state-space forward pass.
//!
//! One block: per-step embedding, an input-dependent gate producing
//! `(delta, B, C)`, zero-order-hold discretization of a diagonal negative
//! state matrix, a sequential scan over the lookback, and a per-step
//! Gaussian posterior head whose (optionally sampled) state feeds the
//! multi-horizon prediction head and, for the decoder regularizer, a small
//! reconstruction network.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::engine::params::ParameterSet;
use crate::error::{Error, Result};
use crate::linalg::{affine, affine_into, softplus, softplus_inv};

pub mod init;

/// Lower clamp bound for posterior log standard deviations.
pub const LOG_SIGMA_MIN: f64 = -8.0;
/// Upper clamp bound for posterior log standard deviations.
pub const LOG_SIGMA_MAX: f64 = 3.0;

/// Parameter array names used by the state-space model.
pub mod names {
    pub const EMBED_W: &str = "embed.w";
    pub const EMBED_B: &str = "embed.b";
    pub const GATE_W_DELTA: &str = "gate.w_delta";
    pub const GATE_B_DELTA: &str = "gate.b_delta";
    pub const GATE_W_B: &str = "gate.w_b";
    pub const GATE_W_C: &str = "gate.w_c";
    pub const A_LOG: &str = "ssm.a_log";
    pub const SKIP_D: &str = "ssm.skip_d";
    pub const POST_W_MU: &str = "posterior.w_mu";
    pub const POST_B_MU: &str = "posterior.b_mu";
    pub const POST_W_SIGMA: &str = "posterior.w_sigma";
    pub const POST_B_SIGMA: &str = "posterior.b_sigma";
    pub const HEAD_W: &str = "head.w";
    pub const HEAD_B: &str = "head.b";
    pub const DEC_W1: &str = "decoder.w1";
    pub const DEC_B1: &str = "decoder.b1";
    pub const DEC_W2: &str = "decoder.w2";
    pub const DEC_B2: &str = "decoder.b2";
}

/// Shape of one state-space forecaster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SsmConfig {
    /// Number of input channels `M`.
    pub input_channels: usize,
    /// Indices of the channels the head forecasts.
    pub targets: Vec<usize>,
    pub embed_dim: usize,
    pub state_dim: usize,
    pub bottleneck_dim: usize,
    /// Lookback `T`.
    pub lookback: usize,
    /// Horizon `tau`.
    pub horizon: usize,
    pub stochastic: bool,
    pub multi_position_loss: bool,
    /// Leading positions excluded from the multi-position loss.
    pub warmup: usize,
}

impl SsmConfig {
    /// Defaults: 16-wide embedding, state and bottleneck; every channel is a
    /// target; warmup is a quarter of the lookback.
    pub fn new(input_channels: usize, lookback: usize, horizon: usize) -> Self {
        Self {
            input_channels,
            targets: (0..input_channels).collect(),
            embed_dim: 16,
            state_dim: 16,
            bottleneck_dim: 16,
            lookback,
            horizon,
            stochastic: true,
            multi_position_loss: true,
            warmup: lookback / 4,
        }
    }

    pub fn output_channels(&self) -> usize {
        self.targets.len()
    }

    /// Rows in one window: lookback plus horizon.
    pub fn window_rows(&self) -> usize {
        self.lookback + self.horizon
    }

    pub fn window_len(&self) -> usize {
        self.window_rows() * self.input_channels
    }

    /// Number of standard-normal draws one forward pass consumes.
    pub fn noise_len(&self) -> usize {
        if self.stochastic {
            self.lookback * self.bottleneck_dim
        } else {
            0
        }
    }

    /// 0-based positions `k` whose forecasts enter the training loss.
    pub fn scored_positions(&self) -> std::ops::Range<usize> {
        if self.multi_position_loss {
            self.warmup..self.lookback
        } else {
            self.lookback.saturating_sub(1)..self.lookback
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("input_channels", self.input_channels),
            ("embed_dim", self.embed_dim),
            ("state_dim", self.state_dim),
            ("bottleneck_dim", self.bottleneck_dim),
            ("lookback", self.lookback),
            ("horizon", self.horizon),
        ];
        for (key, v) in positive {
            if v == 0 {
                return Err(Error::config(key, "must be at least 1"));
            }
        }
        if self.warmup >= self.lookback {
            return Err(Error::config(
                "warmup",
                format!(
                    "warmup {} leaves no scorable position for lookback {}",
                    self.warmup, self.lookback
                ),
            ));
        }
        if self.targets.is_empty() {
            return Err(Error::config("targets", "at least one target channel required"));
        }
        if let Some(&bad) = self.targets.iter().find(|&&t| t >= self.input_channels) {
            return Err(Error::config(
                "targets",
                format!("target channel {bad} out of range for {} inputs", self.input_channels),
            ));
        }
        Ok(())
    }
}

/// Per-step output of the selection gate.
#[derive(Debug, Clone, PartialEq)]
pub struct GateOutput {
    /// Positive step size per embedding channel.
    pub delta: Vec<f64>,
    /// Input projection, one entry per state dimension.
    pub b_in: Vec<f64>,
    /// Output projection, one entry per state dimension.
    pub c_out: Vec<f64>,
}

/// Discretized per-channel decay and input matrices for one step (`E x D`, row-major).
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDynamics {
    pub a_bar: Vec<f64>,
    pub b_bar: Vec<f64>,
}

pub struct EmbedWeights<'a> {
    pub w: &'a [f64],
    pub b: &'a [f64],
}

pub struct GateWeights<'a> {
    pub w_delta: &'a [f64],
    pub b_delta: &'a [f64],
    pub w_b: &'a [f64],
    pub w_c: &'a [f64],
}

pub struct PosteriorWeights<'a> {
    pub w_mu: &'a [f64],
    pub b_mu: &'a [f64],
    pub w_sigma: &'a [f64],
    pub b_sigma: &'a [f64],
}

pub struct HeadWeights<'a> {
    pub w: &'a [f64],
    pub b: &'a [f64],
}

pub struct DecoderWeights<'a> {
    pub w1: &'a [f64],
    pub b1: &'a [f64],
    pub w2: &'a [f64],
    pub b2: &'a [f64],
}

/// Borrowed, shape-checked view of every array the forward pass reads.
pub struct SsmWeights<'a> {
    pub embed: EmbedWeights<'a>,
    pub gate: GateWeights<'a>,
    pub a_log: &'a [f64],
    pub skip_d: &'a [f64],
    pub posterior: PosteriorWeights<'a>,
    pub head: HeadWeights<'a>,
    pub decoder: DecoderWeights<'a>,
}

impl<'a> SsmWeights<'a> {
    pub fn from_params(params: &'a ParameterSet, cfg: &SsmConfig) -> Result<Self> {
        use names::*;
        let (m, e, d, h) = (
            cfg.input_channels,
            cfg.embed_dim,
            cfg.state_dim,
            cfg.bottleneck_dim,
        );
        let out = cfg.horizon * cfg.output_channels();
        Ok(Self {
            embed: EmbedWeights {
                w: params.get_sized(EMBED_W, e * m)?,
                b: params.get_sized(EMBED_B, e)?,
            },
            gate: GateWeights {
                w_delta: params.get_sized(GATE_W_DELTA, e * e)?,
                b_delta: params.get_sized(GATE_B_DELTA, e)?,
                w_b: params.get_sized(GATE_W_B, d * e)?,
                w_c: params.get_sized(GATE_W_C, d * e)?,
            },
            a_log: params.get_sized(A_LOG, d)?,
            skip_d: params.get_sized(SKIP_D, e)?,
            posterior: PosteriorWeights {
                w_mu: params.get_sized(POST_W_MU, h * e)?,
                b_mu: params.get_sized(POST_B_MU, h)?,
                w_sigma: params.get_sized(POST_W_SIGMA, h * e)?,
                b_sigma: params.get_sized(POST_B_SIGMA, h)?,
            },
            head: HeadWeights {
                w: params.get_sized(HEAD_W, out * h)?,
                b: params.get_sized(HEAD_B, out)?,
            },
            decoder: DecoderWeights {
                w1: params.get_sized(DEC_W1, 2 * h * h)?,
                b1: params.get_sized(DEC_B1, 2 * h)?,
                w2: params.get_sized(DEC_W2, m * 2 * h)?,
                b2: params.get_sized(DEC_B2, m)?,
            },
        })
    }
}

/// Everything one forward pass over a window produced.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub steps: usize,
    pub embed_dim: usize,
    pub state_dim: usize,
    pub bottleneck_dim: usize,
    pub horizon: usize,
    pub output_channels: usize,
    /// `T x E` embedded inputs.
    pub embedded: Vec<f64>,
    pub gate: Vec<GateOutput>,
    /// `T x E x D` deterministic recurrent states.
    pub states: Vec<f64>,
    /// `T x E` scan outputs (state readout plus skip).
    pub outputs: Vec<f64>,
    /// `T x H` posterior means.
    pub mu: Vec<f64>,
    /// `T x H` clamped posterior log-stds; absent in deterministic mode.
    pub log_sigma: Option<Vec<f64>>,
    /// Standard-normal draws used for sampling, when sampling happened.
    pub noise: Option<Vec<f64>>,
    /// `T x H` bottleneck states fed to the heads.
    pub h: Vec<f64>,
    /// `T x tau x M_out` forecasts; rows before `predicted_from` are zero.
    pub predictions: Vec<f64>,
    pub predicted_from: usize,
    /// `T x M` decoder reconstructions (decoder regularizer only).
    pub recon: Option<Vec<f64>>,
    pub(crate) a_bar: Vec<f64>,
    pub(crate) gain: Vec<f64>,
    pub(crate) log_sigma_raw: Option<Vec<f64>>,
    pub(crate) dec_hidden: Option<Vec<f64>>,
}

impl ForwardTrace {
    /// Forecast (`tau x M_out`) issued at 0-based position `k`.
    pub fn prediction_at(&self, k: usize) -> &[f64] {
        let n = self.horizon * self.output_channels;
        &self.predictions[k * n..(k + 1) * n]
    }

    pub fn mu_at(&self, k: usize) -> &[f64] {
        &self.mu[k * self.bottleneck_dim..(k + 1) * self.bottleneck_dim]
    }

    pub fn log_sigma_at(&self, k: usize) -> Option<&[f64]> {
        let h = self.bottleneck_dim;
        self.log_sigma.as_ref().map(|ls| &ls[k * h..(k + 1) * h])
    }

    pub fn state_at(&self, k: usize) -> &[f64] {
        let n = self.embed_dim * self.state_dim;
        &self.states[k * n..(k + 1) * n]
    }
}

/// Knobs for [`forward_with`] beyond the configuration.
#[derive(Debug, Clone, Copy, Default)]
pub struct ForwardOptions {
    /// Also run the auxiliary decoder.
    pub decoder: bool,
    /// First position whose forecast is computed.
    pub predict_from: usize,
}

/// Per-step affine embedding `x_k = W_e u_k + b_e` over a `T x M` block.
pub fn embed(u: &[f64], input_channels: usize, weights: &EmbedWeights<'_>) -> Result<Vec<f64>> {
    let m = input_channels;
    let e = weights.b.len();
    if m == 0 || u.len() % m != 0 {
        return Err(Error::dim("embed input", m, u.len()));
    }
    if weights.w.len() != e * m {
        return Err(Error::dim("embed weights", e * m, weights.w.len()));
    }
    let steps = u.len() / m;
    let mut x = vec![0.0; steps * e];
    for k in 0..steps {
        affine_into(
            weights.w,
            Some(weights.b),
            &u[k * m..(k + 1) * m],
            &mut x[k * e..(k + 1) * e],
        );
    }
    Ok(x)
}

/// Selection gate: `delta = softplus(W_delta x + b_delta)`, `B = W_B x`, `C = W_C x`.
pub fn gate(x_k: &[f64], weights: &GateWeights<'_>) -> GateOutput {
    let e = x_k.len();
    let d = weights.w_b.len() / e.max(1);
    let mut delta = affine(weights.w_delta, Some(weights.b_delta), x_k, e);
    delta.iter_mut().for_each(|z| *z = softplus(*z));
    GateOutput {
        delta,
        b_in: affine(weights.w_b, None, x_k, d),
        c_out: affine(weights.w_c, None, x_k, d),
    }
}

/// Continuous-time diagonal rates `A = -exp(a_log)`.
pub fn state_rates(a_log: &[f64]) -> Vec<f64> {
    a_log.iter().map(|v| -v.exp()).collect()
}

/// Zero-order-hold discretization of one channel with diagonal `A`:
/// `a_bar = exp(delta a)`, `b_bar = (a_bar - 1) / a * b_in`.
pub fn discretize_zoh(a: &[f64], b_in: &[f64], delta: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if a.len() != b_in.len() {
        return Err(Error::dim("b_in", a.len(), b_in.len()));
    }
    check_rates(a)?;
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::config("delta", format!("step size {delta} must be positive")));
    }
    let mut a_bar = Vec::with_capacity(a.len());
    let mut b_bar = Vec::with_capacity(a.len());
    for (&ad, &bd) in a.iter().zip(b_in) {
        let (ab, f) = zoh_scalar(ad, delta);
        a_bar.push(ab);
        b_bar.push(f * bd);
    }
    Ok((a_bar, b_bar))
}

/// Full-step discretization for every embedding channel.
pub fn discretize_step(a: &[f64], gate: &GateOutput) -> Result<DiscreteDynamics> {
    check_rates(a)?;
    let d = a.len();
    let mut out = DiscreteDynamics {
        a_bar: Vec::with_capacity(gate.delta.len() * d),
        b_bar: Vec::with_capacity(gate.delta.len() * d),
    };
    for &delta in &gate.delta {
        let (ab, bb) = discretize_zoh(a, &gate.b_in, delta)?;
        out.a_bar.extend(ab);
        out.b_bar.extend(bb);
    }
    Ok(out)
}

/// Returns `(exp(delta a), expm1(delta a) / a)`.
#[inline]
pub(crate) fn zoh_scalar(a: f64, delta: f64) -> (f64, f64) {
    let x = delta * a;
    // Separate calls keep both results at full relative precision; `em + 1`
    // cancels for strongly decaying channels.
    (x.exp(), x.exp_m1() / a)
}

fn check_rates(a: &[f64]) -> Result<()> {
    match a.iter().position(|&v| !(v < 0.0)) {
        Some(index) => Err(Error::Stability {
            index,
            value: a[index],
        }),
        None => Ok(()),
    }
}

/// Result of the recurrent scan over a `T x E` embedded sequence.
#[derive(Debug, Clone)]
pub struct ScanOutput {
    pub gates: Vec<GateOutput>,
    /// `T x E x D`.
    pub states: Vec<f64>,
    /// `T x E`.
    pub outputs: Vec<f64>,
    /// `T x E x D` discretized decays, kept for the backward pass.
    pub a_bar: Vec<f64>,
    /// `T x E x D` input gains `expm1(delta a) / a`.
    pub gain: Vec<f64>,
}

/// Sequential selective scan from a zero initial state.
///
/// `H_k[e] = a_bar_k[e] * H_{k-1}[e] + b_bar_k[e] x_k[e]` and
/// `o_k[e] = <C_k, H_k[e]> + skip_d[e] x_k[e]`.
pub fn scan(
    x: &[f64],
    embed_dim: usize,
    a: &[f64],
    skip_d: &[f64],
    gate_weights: &GateWeights<'_>,
) -> Result<ScanOutput> {
    let e = embed_dim;
    let d = a.len();
    if e == 0 || x.len() % e != 0 {
        return Err(Error::dim("scan input", e, x.len()));
    }
    if skip_d.len() != e {
        return Err(Error::dim("skip_d", e, skip_d.len()));
    }
    check_rates(a)?;
    let steps = x.len() / e;
    let mut gates = Vec::with_capacity(steps);
    let mut states = vec![0.0; steps * e * d];
    let mut outputs = vec![0.0; steps * e];
    let mut a_bar = vec![0.0; steps * e * d];
    let mut gain = vec![0.0; steps * e * d];
    let mut prev = vec![0.0; e * d];

    for k in 0..steps {
        let xk = &x[k * e..(k + 1) * e];
        let g = gate(xk, gate_weights);
        let cur = &mut states[k * e * d..(k + 1) * e * d];
        let ab_k = &mut a_bar[k * e * d..(k + 1) * e * d];
        let gain_k = &mut gain[k * e * d..(k + 1) * e * d];
        for ch in 0..e {
            let delta = g.delta[ch];
            let xin = xk[ch];
            let mut acc = skip_d[ch] * xin;
            for s in 0..d {
                let idx = ch * d + s;
                let (ab, f) = zoh_scalar(a[s], delta);
                let hv = ab * prev[idx] + f * g.b_in[s] * xin;
                ab_k[idx] = ab;
                gain_k[idx] = f;
                cur[idx] = hv;
                acc += g.c_out[s] * hv;
            }
            outputs[k * e + ch] = acc;
        }
        if cur.iter().any(|v| !v.is_finite()) || !outputs[k * e..(k + 1) * e].iter().all(|v| v.is_finite())
        {
            return Err(Error::NumericOverflow { step: k });
        }
        prev.copy_from_slice(cur);
        gates.push(g);
    }
    Ok(ScanOutput {
        gates,
        states,
        outputs,
        a_bar,
        gain,
    })
}

/// Recurrence over already-discretized dynamics.
///
/// `a_bar`, `b_bar` are `T x E x D`, `c_out` is `T x D`; returns
/// `(states: T x E x D, outputs: T x E)`.
pub fn linear_recurrence(
    x: &[f64],
    embed_dim: usize,
    a_bar: &[f64],
    b_bar: &[f64],
    c_out: &[f64],
    skip_d: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let e = embed_dim;
    if e == 0 || x.len() % e != 0 {
        return Err(Error::dim("recurrence input", e, x.len()));
    }
    let steps = x.len() / e;
    if steps == 0 || c_out.len() % steps != 0 {
        return Err(Error::dim("c_out", steps, c_out.len()));
    }
    let d = c_out.len() / steps;
    if a_bar.len() != steps * e * d || b_bar.len() != a_bar.len() {
        return Err(Error::dim("discretized dynamics", steps * e * d, a_bar.len()));
    }
    let mut states = vec![0.0; steps * e * d];
    let mut outputs = vec![0.0; steps * e];
    for k in 0..steps {
        for ch in 0..e {
            let xin = x[k * e + ch];
            let mut acc = skip_d[ch] * xin;
            for s in 0..d {
                let idx = (k * e + ch) * d + s;
                let prev = if k == 0 { 0.0 } else { states[idx - e * d] };
                let hv = a_bar[idx] * prev + b_bar[idx] * xin;
                states[idx] = hv;
                acc += c_out[k * d + s] * hv;
            }
            outputs[k * e + ch] = acc;
        }
        let row = &states[k * e * d..(k + 1) * e * d];
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericOverflow { step: k });
        }
    }
    Ok((states, outputs))
}

/// Posterior head: `(mu, clamp(log_sigma))` for one step.
pub fn posterior(o_k: &[f64], weights: &PosteriorWeights<'_>) -> (Vec<f64>, Vec<f64>) {
    let (mu, raw) = posterior_raw(o_k, weights);
    let ls = raw
        .iter()
        .map(|v| v.clamp(LOG_SIGMA_MIN, LOG_SIGMA_MAX))
        .collect();
    (mu, ls)
}

fn posterior_raw(o_k: &[f64], weights: &PosteriorWeights<'_>) -> (Vec<f64>, Vec<f64>) {
    let h = weights.b_mu.len();
    (
        affine(weights.w_mu, Some(weights.b_mu), o_k, h),
        affine(weights.w_sigma, Some(weights.b_sigma), o_k, h),
    )
}

/// Reparameterized draw `mu + exp(log_sigma) * noise`.
pub fn sample_state(mu: &[f64], log_sigma: &[f64], noise: &[f64]) -> Vec<f64> {
    mu.iter()
        .zip(log_sigma)
        .zip(noise)
        .map(|((m, ls), n)| m + ls.exp() * n)
        .collect()
}

/// Affine head from the bottleneck to a row-major `tau x M_out` forecast.
pub fn predict_head(h: &[f64], weights: &HeadWeights<'_>) -> Vec<f64> {
    affine(weights.w, Some(weights.b), h, weights.b.len())
}

/// One-hidden-layer tanh decoder; returns `(hidden activations, reconstruction)`.
pub fn decode(h: &[f64], weights: &DecoderWeights<'_>) -> (Vec<f64>, Vec<f64>) {
    let mut hidden = affine(weights.w1, Some(weights.b1), h, weights.b1.len());
    hidden.iter_mut().for_each(|v| *v = v.tanh());
    let recon = affine(weights.w2, Some(weights.b2), &hidden, weights.b2.len());
    (hidden, recon)
}

/// Full forward pass drawing bottleneck noise from `rng` when stochastic.
pub fn forward<R: Rng + ?Sized>(
    window: &[f64],
    params: &ParameterSet,
    cfg: &SsmConfig,
    rng: &mut R,
) -> Result<ForwardTrace> {
    let noise: Vec<f64> = (0..cfg.noise_len())
        .map(|_| rng.sample(StandardNormal))
        .collect();
    let noise = cfg.stochastic.then_some(noise.as_slice());
    forward_with(window, params, cfg, noise, ForwardOptions::default())
}

/// Forward pass with explicit noise. In stochastic mode `noise = None`
/// uses the posterior mean while still reporting log-stds.
pub fn forward_with(
    window: &[f64],
    params: &ParameterSet,
    cfg: &SsmConfig,
    noise: Option<&[f64]>,
    opts: ForwardOptions,
) -> Result<ForwardTrace> {
    let w = SsmWeights::from_params(params, cfg)?;
    forward_weights(window, &w, cfg, noise, opts)
}

pub(crate) fn forward_weights(
    window: &[f64],
    w: &SsmWeights<'_>,
    cfg: &SsmConfig,
    noise: Option<&[f64]>,
    opts: ForwardOptions,
) -> Result<ForwardTrace> {
    let (t, m, e, hd) = (
        cfg.lookback,
        cfg.input_channels,
        cfg.embed_dim,
        cfg.bottleneck_dim,
    );
    if window.len() < t * m {
        return Err(Error::dim("window", t * m, window.len()));
    }
    let noise = if cfg.stochastic { noise } else { None };
    if let Some(n) = noise {
        if n.len() != t * hd {
            return Err(Error::dim("noise", t * hd, n.len()));
        }
    }
    let u = &window[..t * m];
    let x = embed(u, m, &w.embed)?;
    let a = state_rates(w.a_log);
    let scan_out = scan(&x, e, &a, w.skip_d, &w.gate)?;

    let mut mu = Vec::with_capacity(t * hd);
    let mut ls_raw = Vec::with_capacity(t * hd);
    let mut ls = Vec::with_capacity(t * hd);
    let mut h = Vec::with_capacity(t * hd);
    for k in 0..t {
        let (mu_k, raw_k) = posterior_raw(&scan_out.outputs[k * e..(k + 1) * e], &w.posterior);
        for (j, (&mv, &rv)) in mu_k.iter().zip(&raw_k).enumerate() {
            let lv = rv.clamp(LOG_SIGMA_MIN, LOG_SIGMA_MAX);
            let hv = match noise {
                Some(n) => mv + lv.exp() * n[k * hd + j],
                None => mv,
            };
            mu.push(mv);
            ls_raw.push(rv);
            ls.push(lv);
            h.push(hv);
        }
    }

    let out = cfg.horizon * cfg.output_channels();
    let mut predictions = vec![0.0; t * out];
    let from = opts.predict_from.min(t);
    for k in from..t {
        affine_into(
            w.head.w,
            Some(w.head.b),
            &h[k * hd..(k + 1) * hd],
            &mut predictions[k * out..(k + 1) * out],
        );
    }

    let (recon, dec_hidden) = if opts.decoder {
        let width = w.decoder.b1.len();
        let mut recon = Vec::with_capacity(t * m);
        let mut hidden = Vec::with_capacity(t * width);
        for k in 0..t {
            let (hid, rec) = decode(&h[k * hd..(k + 1) * hd], &w.decoder);
            hidden.extend(hid);
            recon.extend(rec);
        }
        (Some(recon), Some(hidden))
    } else {
        (None, None)
    };

    Ok(ForwardTrace {
        steps: t,
        embed_dim: e,
        state_dim: cfg.state_dim,
        bottleneck_dim: hd,
        horizon: cfg.horizon,
        output_channels: cfg.output_channels(),
        embedded: x,
        gate: scan_out.gates,
        states: scan_out.states,
        outputs: scan_out.outputs,
        mu,
        log_sigma: cfg.stochastic.then_some(ls),
        noise: noise.map(|n| n.to_vec()),
        h,
        predictions,
        predicted_from: from,
        recon,
        a_bar: scan_out.a_bar,
        gain: scan_out.gain,
        log_sigma_raw: cfg.stochastic.then_some(ls_raw),
        dec_hidden,
    })
}

/// Inverse-softplus bias giving the requested step size.
pub(crate) fn delta_bias_for(delta: f64) -> f64 {
    softplus_inv(delta)
}

#[cfg(test)]
mod tests;

use rand::Rng;

use super::{delta_bias_for, names::*, SsmConfig};
use crate::engine::params::ParameterSet;

/// Uniform draws in `+-1/sqrt(fan_in)`.
pub(crate) fn uniform_fan_in<R: Rng + ?Sized>(rng: &mut R, len: usize, fan_in: usize) -> Vec<f64> {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    (0..len).map(|_| rng.random_range(-bound..bound)).collect()
}

/// Geometric spacing from `lo` to `hi` over `n` points.
pub(crate) fn geomspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let ratio = (hi / lo).ln() / (n - 1) as f64;
    (0..n).map(|i| lo * (ratio * i as f64).exp()).collect()
}

impl SsmConfig {
    /// Fresh parameters. Rates `-A` are spread geometrically over `[0.5, D/2]`,
    /// step sizes over `[0.01, 0.1]`, and every bias except the step-size
    /// bias starts at zero.
    pub fn init_params<R: Rng + ?Sized>(&self, rng: &mut R) -> ParameterSet {
        let (m, e, d, h) = (
            self.input_channels,
            self.embed_dim,
            self.state_dim,
            self.bottleneck_dim,
        );
        let out = self.horizon * self.output_channels();
        let mut p = ParameterSet::new();
        p.push(EMBED_W, &[e, m], uniform_fan_in(rng, e * m, m));
        p.push(EMBED_B, &[e], vec![0.0; e]);
        p.push(GATE_W_DELTA, &[e, e], uniform_fan_in(rng, e * e, e));
        let b_delta = geomspace(0.01, 0.1, e)
            .into_iter()
            .map(delta_bias_for)
            .collect();
        p.push(GATE_B_DELTA, &[e], b_delta);
        p.push(GATE_W_B, &[d, e], uniform_fan_in(rng, d * e, e));
        p.push(GATE_W_C, &[d, e], uniform_fan_in(rng, d * e, e));
        let hi = (d as f64 / 2.0).max(0.5);
        let a_log = geomspace(0.5, hi, d).into_iter().map(f64::ln).collect();
        p.push(A_LOG, &[d], a_log);
        p.push(SKIP_D, &[e], vec![1.0; e]);
        p.push(POST_W_MU, &[h, e], uniform_fan_in(rng, h * e, e));
        p.push(POST_B_MU, &[h], vec![0.0; h]);
        p.push(POST_W_SIGMA, &[h, e], uniform_fan_in(rng, h * e, e));
        p.push(POST_B_SIGMA, &[h], vec![0.0; h]);
        p.push(HEAD_W, &[out, h], uniform_fan_in(rng, out * h, h));
        p.push(HEAD_B, &[out], vec![0.0; out]);
        p.push(DEC_W1, &[2 * h, h], uniform_fan_in(rng, 2 * h * h, h));
        p.push(DEC_B1, &[2 * h], vec![0.0; 2 * h]);
        p.push(DEC_W2, &[m, 2 * h], uniform_fan_in(rng, m * 2 * h, 2 * h));
        p.push(DEC_B2, &[m], vec![0.0; m]);
        p
    }
}

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::names::*;
use super::*;
use crate::linalg::softplus;

fn small_cfg(m: usize, t: usize, tau: usize, e: usize, d: usize, h: usize) -> SsmConfig {
    SsmConfig {
        embed_dim: e,
        state_dim: d,
        bottleneck_dim: h,
        ..SsmConfig::new(m, t, tau)
    }
}

fn random_window(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
}

#[test]
fn embed_identity_and_constant_maps() {
    let w = [1.0, 0.0, 0.0, 1.0];
    let b = [0.0, 0.0];
    let x = embed(&[1.0, 2.0], 2, &EmbedWeights { w: &w, b: &b }).unwrap();
    assert_eq!(x, vec![1.0, 2.0]);

    let zero = [0.0; 4];
    let b3 = [3.0, 3.0];
    let x = embed(&[5.0, -1.0, 0.2, 7.0], 2, &EmbedWeights { w: &zero, b: &b3 }).unwrap();
    assert_eq!(x, vec![3.0; 4]);
}

#[test]
fn embed_is_local_in_time() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let w: Vec<f64> = random_window(&mut rng, 3 * 2);
    let b = [0.1, -0.2, 0.3];
    let u1 = random_window(&mut rng, 5 * 2);
    let mut u2 = u1.clone();
    u2[2 * 2 + 1] += 1.5;
    let ew = EmbedWeights { w: &w, b: &b };
    let x1 = embed(&u1, 2, &ew).unwrap();
    let x2 = embed(&u2, 2, &ew).unwrap();
    for k in 0..5 {
        let same = x1[k * 3..(k + 1) * 3] == x2[k * 3..(k + 1) * 3];
        assert_eq!(same, k != 2, "step {k}");
    }
}

#[test]
fn embed_rejects_ragged_input() {
    let w = [0.0; 4];
    let b = [0.0; 2];
    assert!(matches!(
        embed(&[1.0, 2.0, 3.0], 2, &EmbedWeights { w: &w, b: &b }),
        Err(Error::Dimension { .. })
    ));
}

#[test]
fn gate_closed_forms() {
    let zeros = [0.0; 4];
    let gw = GateWeights {
        w_delta: &zeros,
        b_delta: &[0.0, 0.0],
        w_b: &zeros,
        w_c: &[1.0, 0.0, 0.0, 1.0],
    };
    let g = gate(&[0.4, -2.0], &gw);
    for d in &g.delta {
        assert!((d - std::f64::consts::LN_2).abs() < 1e-15);
    }
    assert_eq!(g.b_in, vec![0.0, 0.0]);
    assert_eq!(g.c_out, vec![0.4, -2.0]);
}

#[test]
fn gate_delta_stays_positive_for_very_negative_bias() {
    // ln(1 + e^-20) by its alternating series, summed smallest-first.
    let x = (-20.0f64).exp();
    let oracle = x.powi(3) / 3.0 - x * x / 2.0 + x;
    let gw = GateWeights {
        w_delta: &[0.0],
        b_delta: &[-20.0],
        w_b: &[0.0],
        w_c: &[0.0],
    };
    let g = gate(&[1.0], &gw);
    assert!(g.delta[0] > 0.0);
    assert!((g.delta[0] - oracle).abs() / oracle < 1e-14);
    assert!((g.delta[0] - 2.06e-9).abs() < 1e-11);
}

#[test]
fn zoh_scalar_closed_form() {
    let (ab, bb) = discretize_zoh(&[-1.0], &[1.0], std::f64::consts::LN_2).unwrap();
    assert!((ab[0] - 0.5).abs() < 1e-15);
    assert!((bb[0] - 0.5).abs() < 1e-15);
}

#[test]
fn zoh_small_step_limit() {
    let b_in = 0.7;
    let (ab, bb) = discretize_zoh(&[-3.0], &[b_in], 1e-12).unwrap();
    assert!((ab[0] - 1.0).abs() < 1e-11);
    assert!(bb[0].abs() < 1e-11);
    assert!((bb[0] / 1e-12 - b_in).abs() < 1e-9);
}

#[test]
fn zoh_matches_series_and_quadrature() {
    // exp(-2) by Taylor series, (1 - exp(-2)) / 2 by composite Simpson on exp(-2s).
    let mut term = 1.0;
    let mut series = 1.0;
    for n in 1..60 {
        term *= -2.0 / n as f64;
        series += term;
    }
    let n = 4000;
    let hstep = 1.0 / n as f64;
    let f = |s: f64| (-2.0 * s).exp();
    let mut simpson = f(0.0) + f(1.0);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        simpson += w * f(i as f64 * hstep);
    }
    simpson *= hstep / 3.0;

    let (ab, bb) = discretize_zoh(&[-2.0], &[1.0], 1.0).unwrap();
    assert!((ab[0] - series).abs() < 1e-13);
    assert!((bb[0] - simpson).abs() < 1e-12);
    assert!((ab[0] - 0.135335).abs() < 1e-6);
    assert!((bb[0] - 0.432332).abs() < 1e-6);
}

#[test]
fn zoh_rejects_non_negative_rates() {
    assert!(matches!(
        discretize_zoh(&[-1.0, 0.0], &[1.0, 1.0], 0.1),
        Err(Error::Stability { index: 1, .. })
    ));
    assert!(matches!(
        discretize_zoh(&[0.5], &[1.0], 0.1),
        Err(Error::Stability { index: 0, .. })
    ));
    assert!(discretize_zoh(&[-1.0], &[1.0], 0.0).is_err());
}

#[test]
fn recurrence_geometric_decay() {
    let x = [1.0, 0.0, 0.0];
    let a_bar = [0.5; 3];
    let b_bar = [1.0; 3];
    let c = [1.0; 3];
    let (states, o) = linear_recurrence(&x, 1, &a_bar, &b_bar, &c, &[0.0]).unwrap();
    assert_eq!(states, vec![1.0, 0.5, 0.25]);
    assert_eq!(o, vec![1.0, 0.5, 0.25]);
}

#[test]
fn scan_of_zero_input_is_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let w = random_window(&mut rng, 9);
    let wb = random_window(&mut rng, 6);
    let gw = GateWeights {
        w_delta: &w,
        b_delta: &[0.1, 0.2, 0.3],
        w_b: &wb,
        w_c: &wb,
    };
    let out = scan(&[0.0; 12], 3, &[-0.5, -2.0], &[1.0; 3], &gw).unwrap();
    assert!(out.states.iter().all(|&v| v == 0.0));
    assert!(out.outputs.iter().all(|&v| v == 0.0));
}

#[test]
fn scan_equals_gate_discretize_recurrence() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (t, e, d) = (8, 3, 4);
    let wd = random_window(&mut rng, e * e);
    let bd = random_window(&mut rng, e);
    let wb = random_window(&mut rng, d * e);
    let wc = random_window(&mut rng, d * e);
    let gw = GateWeights {
        w_delta: &wd,
        b_delta: &bd,
        w_b: &wb,
        w_c: &wc,
    };
    let a = [-0.5, -1.0, -2.5, -4.0];
    let skip = random_window(&mut rng, e);
    let x = random_window(&mut rng, t * e);
    let out = scan(&x, e, &a, &skip, &gw).unwrap();

    let (mut ab, mut bb, mut cc) = (vec![], vec![], vec![]);
    for k in 0..t {
        let g = gate(&x[k * e..(k + 1) * e], &gw);
        let dyn_k = discretize_step(&a, &g).unwrap();
        ab.extend(dyn_k.a_bar);
        bb.extend(dyn_k.b_bar);
        cc.extend(g.c_out);
    }
    let (states, o) = linear_recurrence(&x, e, &ab, &bb, &cc, &skip).unwrap();
    for (p, q) in out.states.iter().zip(&states) {
        assert!((p - q).abs() < 1e-12);
    }
    for (p, q) in out.outputs.iter().zip(&o) {
        assert!((p - q).abs() < 1e-12);
    }
}

#[test]
fn scan_reports_overflow_step() {
    let gw = GateWeights {
        w_delta: &[0.0],
        b_delta: &[0.0],
        w_b: &[1.0],
        w_c: &[1.0],
    };
    let x = [1.0, 1e200, 1e200];
    match scan(&x, 1, &[-1e-3], &[0.0], &gw) {
        Err(Error::NumericOverflow { step }) => assert_eq!(step, 1),
        other => panic!("expected overflow, got {other:?}"),
    }
}

#[test]
fn posterior_unit_variance_and_clamp() {
    let w0 = [0.0; 4];
    let pw = PosteriorWeights {
        w_mu: &[1.0, 0.0, 0.0, 1.0],
        b_mu: &[0.0, 0.0],
        w_sigma: &w0,
        b_sigma: &[0.0, -100.0],
    };
    let (mu, ls) = posterior(&[0.3, -0.7], &pw);
    assert_eq!(mu, vec![0.3, -0.7]);
    assert_eq!(ls[0].exp(), 1.0);
    assert_eq!(ls[1], LOG_SIGMA_MIN);
}

#[test]
fn sampling_with_zero_noise_is_the_mean() {
    let mu = [0.5, -1.0];
    assert_eq!(sample_state(&mu, &[0.3, -2.0], &[0.0, 0.0]), mu.to_vec());
    let h = sample_state(&mu, &[0.0, 0.0], &[1.0, -1.0]);
    assert_eq!(h, vec![1.5, -2.0]);
}

#[test]
fn predict_head_shapes_and_constants() {
    let cfg = SsmConfig {
        targets: vec![0, 1],
        ..small_cfg(2, 4, 3, 2, 2, 5)
    };
    let out = cfg.horizon * cfg.output_channels();
    let b: Vec<f64> = (0..out).map(|i| i as f64).collect();
    let y = predict_head(&[1.0; 5], &HeadWeights { w: &vec![0.0; out * 5], b: &b });
    assert_eq!(y, b);

    let mut w = vec![0.0; 5];
    w[0] = 1.0;
    let y = predict_head(&[2.0, 9.0, 9.0, 9.0, 9.0], &HeadWeights { w: &w, b: &[0.0] });
    assert_eq!(y, vec![2.0]);
}

fn zero_biases(p: &mut ParameterSet) {
    for name in [EMBED_B, POST_B_MU, POST_B_SIGMA, HEAD_B, DEC_B1, DEC_B2] {
        p.get_mut(name).unwrap().iter_mut().for_each(|v| *v = 0.0);
    }
}

#[test]
fn zero_input_gives_zero_forecast() {
    let cfg = small_cfg(2, 6, 2, 3, 3, 3);
    let mut p = cfg.init_params(&mut ChaCha8Rng::seed_from_u64(1));
    zero_biases(&mut p);
    let window = vec![0.0; cfg.window_len()];
    let tr = forward(&window, &p, &cfg, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
    // With zero input every state and mean vanish; the sampled state carries
    // unit noise, so check the deterministic path.
    assert!(tr.mu.iter().all(|&v| v == 0.0));
    let det = forward_with(&window, &p, &cfg, None, ForwardOptions::default()).unwrap();
    assert!(det.predictions.iter().all(|&v| v == 0.0));
}

#[test]
fn dead_channel_does_not_change_the_trace() {
    let cfg = small_cfg(2, 6, 2, 3, 3, 3);
    let mut p = cfg.init_params(&mut ChaCha8Rng::seed_from_u64(1));
    let w = p.get_mut(EMBED_W).unwrap();
    for r in 0..3 {
        w[r * 2 + 1] = 0.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let u1 = random_window(&mut rng, cfg.window_len());
    let mut u2 = u1.clone();
    for k in 0..cfg.window_rows() {
        u2[k * 2 + 1] += 3.0;
    }
    let a = forward(&u1, &p, &cfg, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
    let b = forward(&u2, &p, &cfg, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
    assert_eq!(a.states, b.states);
    assert_eq!(a.h, b.h);
    assert_eq!(a.predictions, b.predictions);
}

#[test]
fn deterministic_mode_equals_zero_noise() {
    let cfg = small_cfg(2, 8, 2, 2, 2, 2);
    let p = cfg.init_params(&mut ChaCha8Rng::seed_from_u64(11));
    let window = random_window(&mut ChaCha8Rng::seed_from_u64(12), cfg.window_len());
    let zeros = vec![0.0; cfg.noise_len()];
    let zero_noise =
        forward_with(&window, &p, &cfg, Some(&zeros), ForwardOptions::default()).unwrap();
    let det_cfg = SsmConfig {
        stochastic: false,
        ..cfg.clone()
    };
    let det = forward(&window, &p, &det_cfg, &mut ChaCha8Rng::seed_from_u64(99)).unwrap();
    assert!(det.log_sigma.is_none());
    assert_eq!(det.h, det.mu);
    assert_eq!(det.predictions, zero_noise.predictions);
    assert_eq!(det.h, zero_noise.h);
}

#[test]
fn fixed_seed_gives_identical_samples() {
    let cfg = small_cfg(2, 8, 2, 2, 2, 2);
    let p = cfg.init_params(&mut ChaCha8Rng::seed_from_u64(11));
    let window = random_window(&mut ChaCha8Rng::seed_from_u64(12), cfg.window_len());
    let a = forward(&window, &p, &cfg, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
    let b = forward(&window, &p, &cfg, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
    let c = forward(&window, &p, &cfg, &mut ChaCha8Rng::seed_from_u64(6)).unwrap();
    assert_eq!(a.h, b.h);
    assert_ne!(a.h, c.h);
}

#[test]
fn forecasts_are_causal() {
    let cfg = small_cfg(2, 10, 3, 3, 3, 3);
    let p = cfg.init_params(&mut ChaCha8Rng::seed_from_u64(21));
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let u = random_window(&mut rng, cfg.window_len());
    let base = forward_with(&u, &p, &cfg, None, ForwardOptions::default()).unwrap();
    for k in 0..cfg.lookback - 1 {
        let mut v = u.clone();
        for idx in (k + 1) * 2..v.len() {
            v[idx] += rng.random_range(-3.0..3.0);
        }
        let pert = forward_with(&v, &p, &cfg, None, ForwardOptions::default()).unwrap();
        for j in 0..=k {
            assert_eq!(base.prediction_at(j), pert.prediction_at(j), "k={k} j={j}");
        }
        assert_ne!(base.prediction_at(k + 1), pert.prediction_at(k + 1));
    }
}

#[test]
fn gate_changes_only_at_the_scaled_step() {
    let cfg = small_cfg(2, 8, 2, 3, 3, 3);
    let p = cfg.init_params(&mut ChaCha8Rng::seed_from_u64(31));
    let u = random_window(&mut ChaCha8Rng::seed_from_u64(32), cfg.window_len());
    let mut v = u.clone();
    v[4 * 2] *= 2.5;
    v[4 * 2 + 1] *= 2.5;
    let a = forward_with(&u, &p, &cfg, None, ForwardOptions::default()).unwrap();
    let b = forward_with(&v, &p, &cfg, None, ForwardOptions::default()).unwrap();
    for k in 0..cfg.lookback {
        let changed = a.gate[k] != b.gate[k];
        assert_eq!(changed, k == 4, "step {k}");
    }
}

#[test]
fn long_unit_scale_input_does_not_overflow() {
    let cfg = SsmConfig::new(2, 10_000, 1);
    let p = cfg.init_params(&mut ChaCha8Rng::seed_from_u64(41));
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let u = random_window(&mut rng, cfg.window_len());
    let tr = forward_with(&u, &p, &cfg, None, ForwardOptions::default()).unwrap();
    assert!(tr.states.iter().all(|v| v.is_finite()));
    assert!(tr.predictions.iter().all(|v| v.is_finite()));
}

#[test]
fn decoder_output_present_only_when_requested() {
    let cfg = small_cfg(2, 6, 2, 2, 2, 2);
    let p = cfg.init_params(&mut ChaCha8Rng::seed_from_u64(1));
    let u = vec![0.1; cfg.window_len()];
    let plain = forward_with(&u, &p, &cfg, None, ForwardOptions::default()).unwrap();
    assert!(plain.recon.is_none());
    let with = forward_with(
        &u,
        &p,
        &cfg,
        None,
        ForwardOptions {
            decoder: true,
            predict_from: 0,
        },
    )
    .unwrap();
    assert_eq!(with.recon.as_ref().unwrap().len(), cfg.lookback * 2);
}

#[test]
fn config_validation() {
    let mut cfg = SsmConfig::new(2, 8, 2);
    assert!(cfg.validate().is_ok());
    cfg.warmup = 8;
    assert!(cfg.validate().is_err());
    cfg.warmup = 0;
    cfg.state_dim = 0;
    assert!(cfg.validate().is_err());
    let cfg = SsmConfig {
        targets: vec![2],
        ..SsmConfig::new(2, 8, 2)
    };
    assert!(cfg.validate().is_err());
}

#[test]
fn softplus_is_positive_everywhere_used() {
    for z in [-700.0, -30.0, 0.0, 35.0] {
        assert!(softplus(z) > 0.0);
    }
}

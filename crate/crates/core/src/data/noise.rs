use rand::Rng;
use serde::{Deserialize, Serialize};

use super::windows::Windows;
use crate::engine::train::stream_rng;
use crate::error::{Error, Result};

const NOISE_STREAM: u64 = 20;

/// Sparse additive impulses `+-kappa * sigma_c` on model inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSpec {
    /// Hit probability per (step, channel).
    pub probability: f64,
    /// Impulse size in per-channel standard deviations.
    pub magnitude: f64,
    /// Channels eligible for hits; `None` means all.
    pub channels: Option<Vec<usize>>,
    pub seed: u64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            probability: 0.05,
            magnitude: 3.0,
            channels: None,
            seed: 0,
        }
    }
}

impl NoiseSpec {
    pub fn validate(&self, num_channels: usize) -> Result<()> {
        if !(0.0..=1.0).contains(&self.probability) {
            return Err(Error::config(
                "noise.probability",
                format!("{} is outside [0, 1]", self.probability),
            ));
        }
        if !(self.magnitude >= 0.0 && self.magnitude.is_finite()) {
            return Err(Error::config("noise.magnitude", "must be finite and non-negative"));
        }
        if let Some(bad) = self.channels.iter().flatten().find(|&&c| c >= num_channels) {
            return Err(Error::config(
                "noise.channels",
                format!("channel {bad} out of range for {num_channels} channels"),
            ));
        }
        Ok(())
    }
}

/// Which `(window, step, channel)` cells received an impulse.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImpulseMask {
    pub lookback: usize,
    pub channels: usize,
    hits: Vec<bool>,
}

impl ImpulseMask {
    pub fn is_hit(&self, window: usize, step: usize, channel: usize) -> bool {
        self.hits[(window * self.lookback + step) * self.channels + channel]
    }

    pub fn count(&self) -> usize {
        self.hits.iter().filter(|&&h| h).count()
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }
}

/// Adds impulses to the first `lookback` rows of every window.
///
/// Cells are visited window by window, step by step, channel by channel;
/// each eligible cell draws a uniform to decide a hit and, when hit, a
/// fair sign. `channel_std` scales the impulse per channel.
pub fn inject_impulse_noise(
    windows: &Windows,
    lookback: usize,
    spec: &NoiseSpec,
    channel_std: &[f64],
) -> Result<(Windows, ImpulseMask)> {
    let m = windows.channels();
    spec.validate(m)?;
    if channel_std.len() != m {
        return Err(Error::dim("channel_std", m, channel_std.len()));
    }
    if lookback > windows.rows() {
        return Err(Error::dim("lookback", windows.rows(), lookback));
    }
    let mut eligible = vec![spec.channels.is_none(); m];
    for &c in spec.channels.iter().flatten() {
        eligible[c] = true;
    }
    let mut rng = stream_rng(spec.seed, NOISE_STREAM);
    let mut out = windows.clone();
    let mut hits = vec![false; windows.len() * lookback * m];
    for w in 0..out.len() {
        let win = out.get_mut(w);
        for k in 0..lookback {
            for c in 0..m {
                if !eligible[c] {
                    continue;
                }
                if rng.random::<f64>() < spec.probability {
                    let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                    win[k * m + c] += sign * spec.magnitude * channel_std[c];
                    hits[(w * lookback + k) * m + c] = true;
                }
            }
        }
    }
    Ok((
        out,
        ImpulseMask {
            lookback,
            channels: m,
            hits,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_windows() -> Windows {
        let data: Vec<f64> = (0..3 * 6 * 2).map(|v| (v as f64).sin()).collect();
        Windows::from_flat(data, 6, 2).unwrap()
    }

    #[test]
    fn zero_probability_is_identity() {
        let w = sample_windows();
        let spec = NoiseSpec {
            probability: 0.0,
            ..Default::default()
        };
        let (out, mask) = inject_impulse_noise(&w, 4, &spec, &[1.0, 1.0]).unwrap();
        assert_eq!(out, w);
        assert!(mask.is_empty());
    }

    #[test]
    fn certain_hits_match_reference_generator() {
        let w = sample_windows();
        let spec = NoiseSpec {
            probability: 1.0,
            magnitude: 3.0,
            channels: None,
            seed: 42,
        };
        let std = [0.5, 2.0];
        let (out, mask) = inject_impulse_noise(&w, 4, &spec, &std).unwrap();
        let mut rng = stream_rng(42, NOISE_STREAM);
        for i in 0..w.len() {
            for k in 0..4 {
                for c in 0..2 {
                    let _: f64 = rng.random();
                    let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                    let delta = out.get(i)[k * 2 + c] - w.get(i)[k * 2 + c];
                    assert_eq!(delta, (w.get(i)[k * 2 + c] + sign * 3.0 * std[c]) - w.get(i)[k * 2 + c]);
                    assert!(((delta.abs()) - 3.0 * std[c]).abs() < 1e-12);
                    assert!(mask.is_hit(i, k, c));
                }
            }
        }
    }

    #[test]
    fn targets_are_untouched() {
        let w = sample_windows();
        let spec = NoiseSpec {
            probability: 1.0,
            ..Default::default()
        };
        let (out, _) = inject_impulse_noise(&w, 4, &spec, &[1.0, 1.0]).unwrap();
        for i in 0..w.len() {
            assert_eq!(out.get(i)[8..], w.get(i)[8..]);
        }
    }

    #[test]
    fn channel_mask_limits_hits() {
        let w = sample_windows();
        let spec = NoiseSpec {
            probability: 1.0,
            channels: Some(vec![1]),
            ..Default::default()
        };
        let (out, mask) = inject_impulse_noise(&w, 4, &spec, &[1.0, 1.0]).unwrap();
        for i in 0..w.len() {
            for k in 0..4 {
                assert_eq!(out.get(i)[k * 2], w.get(i)[k * 2]);
                assert!(!mask.is_hit(i, k, 0));
            }
        }
    }

    #[test]
    fn repeated_injection_is_identical() {
        let w = sample_windows();
        let spec = NoiseSpec {
            probability: 0.3,
            ..Default::default()
        };
        let a = inject_impulse_noise(&w, 4, &spec, &[1.0, 1.0]).unwrap();
        let b = inject_impulse_noise(&w, 4, &spec, &[1.0, 1.0]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn probability_outside_unit_interval_rejected() {
        let spec = NoiseSpec {
            probability: 1.5,
            ..Default::default()
        };
        assert!(inject_impulse_noise(&sample_windows(), 4, &spec, &[1.0, 1.0]).is_err());
    }
}

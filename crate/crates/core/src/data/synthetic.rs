use chrono::{Duration, NaiveDate};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::SeriesFrame;
use crate::engine::train::stream_rng;
use crate::error::{Error, Result};

const SIGNAL_STREAM: u64 = 10;
const DISTRACTOR_STREAM: u64 = 11;
const BURN_IN: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DistractorKind {
    IidGaussian,
    /// Stationary AR(1) with the given lag coefficient.
    Ar1 { coef: f64 },
}

/// AR(2) signal channel plus an independent distractor channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub length: usize,
    pub phi: [f64; 2],
    pub innovation_std: f64,
    pub distractor: DistractorKind,
    /// Distractor standard deviation in units of the signal's stationary
    /// standard deviation.
    pub distractor_scale: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            length: 4000,
            phi: [1.5, -0.75],
            innovation_std: 0.1,
            distractor: DistractorKind::IidGaussian,
            distractor_scale: 2.0,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    /// Moduli of the roots of `z^2 - phi1 z - phi2`.
    pub fn root_moduli(&self) -> [f64; 2] {
        let [p1, p2] = self.phi;
        let disc = p1 * p1 + 4.0 * p2;
        if disc < 0.0 {
            let m = (-p2).sqrt();
            [m, m]
        } else {
            let s = disc.sqrt();
            [((p1 + s) / 2.0).abs(), ((p1 - s) / 2.0).abs()]
        }
    }

    /// Stationary standard deviation of the AR(2) signal.
    pub fn signal_std(&self) -> f64 {
        let [p1, p2] = self.phi;
        let var = self.innovation_std.powi(2) * (1.0 - p2) / ((1.0 + p2) * ((1.0 - p2).powi(2) - p1 * p1));
        var.sqrt()
    }

    pub fn validate(&self) -> Result<()> {
        if self.root_moduli().iter().any(|&r| !(r < 1.0)) {
            return Err(Error::config(
                "synthetic.phi",
                format!("AR(2) coefficients {:?} are not stationary", self.phi),
            ));
        }
        if !(self.innovation_std >= 0.0) || !(self.distractor_scale >= 0.0) {
            return Err(Error::config("synthetic", "standard deviations must be non-negative"));
        }
        if let DistractorKind::Ar1 { coef } = self.distractor {
            if !(coef.abs() < 1.0) {
                return Err(Error::config("synthetic.distractor.coef", "must lie in (-1, 1)"));
            }
        }
        if self.length == 0 {
            return Err(Error::config("synthetic.length", "must be at least 1"));
        }
        Ok(())
    }
}

/// Generates `[signal, distractor]`; the target is the signal.
///
/// The two channels draw from disjoint generator streams, so the
/// distractor is independent of the signal by construction.
pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<SeriesFrame> {
    spec.validate()?;
    let n = spec.length;
    let [p1, p2] = spec.phi;
    let mut rng = stream_rng(spec.seed, SIGNAL_STREAM);
    let (mut y1, mut y2) = (0.0, 0.0);
    let mut signal = Vec::with_capacity(n);
    for k in 0..BURN_IN + n {
        let e: f64 = rng.sample(StandardNormal);
        let y = p1 * y1 + p2 * y2 + spec.innovation_std * e;
        y2 = y1;
        y1 = y;
        if k >= BURN_IN {
            signal.push(y);
        }
    }

    let std = spec.distractor_scale * spec.signal_std();
    let mut rng = stream_rng(spec.seed, DISTRACTOR_STREAM);
    let distractor: Vec<f64> = match spec.distractor {
        DistractorKind::IidGaussian => (0..n).map(|_| std * rng.sample::<f64, _>(StandardNormal)).collect(),
        DistractorKind::Ar1 { coef } => {
            let innov = std * (1.0 - coef * coef).sqrt();
            let mut x = std * rng.sample::<f64, _>(StandardNormal);
            (0..n)
                .map(|_| {
                    let cur = x;
                    x = coef * x + innov * rng.sample::<f64, _>(StandardNormal);
                    cur
                })
                .collect()
        }
    };

    let start = NaiveDate::from_ymd_opt(2000, 1, 1)
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .expect("valid start date");
    let timestamps = (0..n)
        .map(|k| (start + Duration::hours(k as i64)).format("%Y-%m-%d %H:%M:%S").to_string())
        .collect();
    let values = signal.iter().zip(&distractor).flat_map(|(&s, &d)| [s, d]).collect();
    let mut frame = SeriesFrame::new(
        "synthetic",
        timestamps,
        values,
        vec!["signal".into(), "distractor".into()],
    )?;
    frame.targets = vec![0];
    Ok(frame)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pearson(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let ma = a.iter().sum::<f64>() / n;
        let mb = b.iter().sum::<f64>() / n;
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    #[test]
    fn default_coefficients_are_stationary() {
        let spec = SyntheticSpec::default();
        for r in spec.root_moduli() {
            assert!((r - 0.75f64.sqrt()).abs() < 1e-12);
        }
        assert!(spec.validate().is_ok());
    }

    #[test]
    fn explosive_coefficients_rejected() {
        let spec = SyntheticSpec {
            phi: [1.5, -1.2],
            ..Default::default()
        };
        assert!(gen_synthetic(&spec).unwrap_err().is_config());
        let spec = SyntheticSpec {
            phi: [0.6, 0.5],
            ..Default::default()
        };
        assert!(gen_synthetic(&spec).is_err());
    }

    #[test]
    fn zero_scale_gives_silent_distractor() {
        let spec = SyntheticSpec {
            distractor_scale: 0.0,
            length: 200,
            ..Default::default()
        };
        let f = gen_synthetic(&spec).unwrap();
        assert!(f.column(1).iter().all(|&v| v == 0.0));
        assert_eq!(f.targets, vec![0]);
    }

    #[test]
    fn distractor_uncorrelated_with_future_signal() {
        for distractor in [DistractorKind::IidGaussian, DistractorKind::Ar1 { coef: 0.9 }] {
            let spec = SyntheticSpec {
                length: 10_000,
                distractor,
                seed: 3,
                ..Default::default()
            };
            let f = gen_synthetic(&spec).unwrap();
            let (s, d) = (f.column(0), f.column(1));
            for lag in [1, 4, 16] {
                let r = pearson(&d[..d.len() - lag], &s[lag..]);
                assert!(r.abs() < 0.05, "lag {lag}: r = {r}");
            }
        }
    }

    #[test]
    fn distractor_matches_requested_scale() {
        let spec = SyntheticSpec {
            length: 20_000,
            ..Default::default()
        };
        let f = gen_synthetic(&spec).unwrap();
        let sd = |v: &[f64]| {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
        };
        let ratio = sd(&f.column(1)) / sd(&f.column(0));
        assert!((ratio - 2.0).abs() < 0.2, "{ratio}");
    }

    #[test]
    fn seed_determines_output() {
        let spec = SyntheticSpec {
            length: 50,
            seed: 8,
            ..Default::default()
        };
        assert_eq!(gen_synthetic(&spec).unwrap(), gen_synthetic(&spec).unwrap());
    }
}

use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::SeriesFrame;
use crate::error::{Error, Result};

/// Added to every standard deviation so constant channels map to zero.
pub const STD_FLOOR: f64 = 1e-8;

/// Per-channel z-score statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    /// Population standard deviation plus [`STD_FLOOR`].
    pub std: Vec<f64>,
}

impl NormStats {
    /// Population statistics of rows `range` of an `L x M` array.
    pub fn fit(values: &[f64], channels: usize, range: Range<usize>) -> Result<Self> {
        if range.is_empty() {
            return Err(Error::Data("normalization range is empty".into()));
        }
        if range.end * channels > values.len() {
            return Err(Error::dim("normalization range", values.len() / channels.max(1), range.end));
        }
        let n = range.len() as f64;
        let mut mean = vec![0.0; channels];
        for row in range.clone() {
            for (c, m) in mean.iter_mut().enumerate() {
                *m += values[row * channels + c];
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; channels];
        for row in range {
            for (c, v) in var.iter_mut().enumerate() {
                let d = values[row * channels + c] - mean[c];
                *v += d * d;
            }
        }
        let std = var.iter().map(|v| (v / n).sqrt() + STD_FLOOR).collect();
        Ok(Self { mean, std })
    }

    pub fn apply(&self, values: &mut [f64]) {
        let m = self.mean.len();
        for row in values.chunks_exact_mut(m) {
            for (c, v) in row.iter_mut().enumerate() {
                *v = (*v - self.mean[c]) / self.std[c];
            }
        }
    }

    pub fn invert(&self, values: &mut [f64]) {
        let m = self.mean.len();
        for row in values.chunks_exact_mut(m) {
            for (c, v) in row.iter_mut().enumerate() {
                *v = *v * self.std[c] + self.mean[c];
            }
        }
    }
}

/// Z-scores every row of `frame` with statistics fitted on `train` only.
pub fn normalize(frame: &SeriesFrame, train: Range<usize>) -> Result<(SeriesFrame, NormStats)> {
    let stats = NormStats::fit(&frame.values, frame.num_channels(), train)?;
    let mut out = frame.clone();
    stats.apply(&mut out.values);
    out.norm = Some(stats.clone());
    Ok((out, stats))
}

/// Inverse of [`normalize`].
pub fn denormalize(frame: &SeriesFrame, stats: &NormStats) -> SeriesFrame {
    let mut out = frame.clone();
    stats.invert(&mut out.values);
    out.norm = None;
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(vals: Vec<f64>, m: usize) -> SeriesFrame {
        let n = vals.len() / m;
        SeriesFrame::new(
            "t",
            (0..n).map(|i| i.to_string()).collect(),
            vals,
            (0..m).map(|c| format!("c{c}")).collect(),
        )
        .unwrap()
    }

    #[test]
    fn three_values_z_score() {
        let (out, stats) = normalize(&frame(vec![1.0, 2.0, 3.0], 1), 0..3).unwrap();
        assert!((stats.mean[0] - 2.0).abs() < 1e-15);
        assert!((stats.std[0] - (2.0f64 / 3.0).sqrt()).abs() < 1e-7);
        let expected = [-1.224744871391589, 0.0, 1.224744871391589];
        for (a, b) in out.values.iter().zip(expected) {
            assert!((a - b).abs() < 1e-6, "{a} {b}");
        }
    }

    #[test]
    fn constant_channel_becomes_zero() {
        let (out, _) = normalize(&frame(vec![4.0, 1.0, 4.0, 2.0, 4.0, 3.0], 2), 0..3).unwrap();
        assert!(out.column(0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn round_trip_restores_values() {
        let f = frame(vec![0.3, -7.0, 12.5, 1e3, 4.0, 2.2, -0.1, 9.9], 2);
        let (n, stats) = normalize(&f, 0..2).unwrap();
        let back = denormalize(&n, &stats);
        for (a, b) in back.values.iter().zip(&f.values) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn statistics_ignore_rows_outside_train() {
        let f = frame(vec![1.0, 3.0, 1000.0, -1000.0], 1);
        let (_, stats) = normalize(&f, 0..2).unwrap();
        assert_eq!(stats.mean[0], 2.0);
    }
}

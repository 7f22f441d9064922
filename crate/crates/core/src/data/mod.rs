//! Series ingestion, chronological splits, normalization, windowing,
//! synthetic processes and test-time impulse noise.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub mod csv;
pub mod noise;
pub mod normalize;
pub mod split;
pub mod synthetic;
pub mod windows;

pub use self::csv::{load_csv, write_csv};
pub use noise::{inject_impulse_noise, ImpulseMask, NoiseSpec};
pub use normalize::{normalize, NormStats};
pub use split::{split, SplitRanges};
pub use synthetic::{gen_synthetic, DistractorKind, SyntheticSpec};
pub use windows::{windows, Windows};

/// A multichannel series with its timestamps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesFrame {
    pub name: String,
    pub timestamps: Vec<String>,
    /// `L x M` row-major values.
    pub values: Vec<f64>,
    pub channels: Vec<String>,
    /// Default forecast targets.
    pub targets: Vec<usize>,
    /// Set once the frame has been normalized.
    pub norm: Option<NormStats>,
}

impl SeriesFrame {
    pub fn new(name: impl Into<String>, timestamps: Vec<String>, values: Vec<f64>, channels: Vec<String>) -> Result<Self> {
        let m = channels.len();
        if m == 0 || values.len() != timestamps.len() * m {
            return Err(Error::dim("series values", timestamps.len() * m, values.len()));
        }
        Ok(Self {
            name: name.into(),
            timestamps,
            values,
            targets: (0..m).collect(),
            channels,
            norm: None,
        })
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn value(&self, row: usize, channel: usize) -> f64 {
        self.values[row * self.channels.len() + channel]
    }

    /// One channel as a contiguous vector.
    pub fn column(&self, channel: usize) -> Vec<f64> {
        let m = self.channels.len();
        self.values.iter().skip(channel).step_by(m).copied().collect()
    }

    pub fn channel_index(&self, name: &str) -> Option<usize> {
        self.channels.iter().position(|c| c == name)
    }

    /// Keeps the first `rows` rows.
    pub fn truncate(&mut self, rows: usize) {
        if rows < self.len() {
            self.timestamps.truncate(rows);
            self.values.truncate(rows * self.channels.len());
        }
    }
}

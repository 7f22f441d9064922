use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Contiguous stack of equally shaped `rows x channels` windows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Windows {
    data: Vec<f64>,
    count: usize,
    rows: usize,
    channels: usize,
}

impl Windows {
    /// Wraps an already stacked buffer.
    pub fn from_flat(data: Vec<f64>, rows: usize, channels: usize) -> Result<Self> {
        let per = rows * channels;
        if per == 0 || data.len() % per != 0 {
            return Err(Error::dim("window buffer", per, data.len()));
        }
        Ok(Self {
            count: data.len() / per,
            data,
            rows,
            channels,
        })
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn window_len(&self) -> usize {
        self.rows * self.channels
    }

    pub fn get(&self, i: usize) -> &[f64] {
        let n = self.window_len();
        &self.data[i * n..(i + 1) * n]
    }

    pub fn get_mut(&mut self, i: usize) -> &mut [f64] {
        let n = self.window_len();
        &mut self.data[i * n..(i + 1) * n]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.window_len())
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    /// Keeps only the windows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.window_len());
        for &i in indices {
            data.extend_from_slice(self.get(i));
        }
        Self {
            data,
            count: indices.len(),
            rows: self.rows,
            channels: self.channels,
        }
    }
}

/// Sliding windows of `lookback + horizon` rows over rows `range` of a
/// row-major `L x channels` array.
pub fn windows(
    values: &[f64],
    channels: usize,
    range: std::ops::Range<usize>,
    lookback: usize,
    horizon: usize,
    stride: usize,
) -> Result<Windows> {
    if stride == 0 {
        return Err(Error::config("stride", "must be at least 1"));
    }
    if channels == 0 || values.len() % channels != 0 {
        return Err(Error::dim("series", channels, values.len()));
    }
    let total = values.len() / channels;
    if range.end > total || range.start > range.end {
        return Err(Error::dim("window range end", total, range.end));
    }
    let rows = lookback + horizon;
    let len = range.len();
    if rows == 0 || len < rows {
        return Err(Error::Data(format!(
            "range of {len} rows is shorter than one window of {rows} rows"
        )));
    }
    let count = (len - rows) / stride + 1;
    let mut data = Vec::with_capacity(count * rows * channels);
    for i in 0..count {
        let start = range.start + i * stride;
        data.extend_from_slice(&values[start * channels..(start + rows) * channels]);
    }
    Windows::from_flat(data, rows, channels)
}

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Contiguous chronological row ranges.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitRanges {
    pub train: Range<usize>,
    pub val: Range<usize>,
    pub test: Range<usize>,
}

/// Splits `len` rows by `ratios` (train, val, test); every part must hold
/// at least `min_rows` rows.
pub fn split(len: usize, ratios: [f64; 3], min_rows: usize) -> Result<SplitRanges> {
    if ratios.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
        return Err(Error::config("split", "ratios must be finite and non-negative"));
    }
    let sum: f64 = ratios.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::config("split", format!("ratios sum to {sum}, not 1")));
    }
    let train_end = ((len as f64) * ratios[0]).round() as usize;
    let val_end = (((len as f64) * (ratios[0] + ratios[1])).round() as usize).min(len);
    let out = SplitRanges {
        train: 0..train_end,
        val: train_end..val_end,
        test: val_end..len,
    };
    for (name, r) in [("train", &out.train), ("val", &out.val), ("test", &out.test)] {
        if r.len() < min_rows {
            return Err(Error::config(
                format!("split.{name}"),
                format!(
                    "{name} split has {} rows but one window needs {min_rows}",
                    r.len()
                ),
            ));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hundred_rows_default_ratios() {
        let s = split(100, [0.7, 0.1, 0.2], 6).unwrap();
        assert_eq!((s.train, s.val, s.test), (0..70, 70..80, 80..100));
    }

    #[test]
    fn ratios_must_sum_to_one() {
        assert!(split(100, [0.7, 0.2, 0.2], 1).unwrap_err().is_config());
    }

    #[test]
    fn short_split_is_named() {
        let err = split(100, [0.7, 0.1, 0.2], 12).unwrap_err();
        assert!(err.to_string().contains("split.val"), "{err}");
    }
}

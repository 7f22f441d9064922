use std::cmp::Ordering;
use std::path::Path;

use chrono::{DateTime, NaiveDate, NaiveDateTime};

use super::SeriesFrame;
use crate::error::{Error, Result};

const MISSING: [&str; 6] = ["", "na", "nan", "null", "none", "?"];

const DATETIME_FORMATS: [&str; 4] = [
    "%Y-%m-%d %H:%M:%S",
    "%Y-%m-%d %H:%M",
    "%Y/%m/%d %H:%M:%S",
    "%Y/%m/%d %H:%M",
];

#[derive(Debug, PartialEq, PartialOrd)]
enum Stamp {
    Time(NaiveDateTime),
    Number(f64),
}

fn parse_stamp(text: &str) -> Option<Stamp> {
    let t = text.trim();
    for f in DATETIME_FORMATS {
        if let Ok(dt) = NaiveDateTime::parse_from_str(t, f) {
            return Some(Stamp::Time(dt));
        }
    }
    if let Ok(d) = NaiveDate::parse_from_str(t, "%Y-%m-%d") {
        return d.and_hms_opt(0, 0, 0).map(Stamp::Time);
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(t) {
        return Some(Stamp::Time(dt.naive_utc()));
    }
    t.parse::<f64>().ok().filter(|v| v.is_finite()).map(Stamp::Number)
}

/// Reads a CSV whose first column is a timestamp and whose remaining
/// columns are numeric channels. Row indices in errors count data rows
/// from 0, excluding the header.
pub fn load_csv(path: &Path) -> Result<SeriesFrame> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = ::csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(::csv::Trim::All)
        .from_reader(file);
    let header = reader.headers()?.clone();
    if header.len() < 2 {
        return Err(Error::Data(format!(
            "{}: need a timestamp column and at least one value column",
            path.display()
        )));
    }
    let channels: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let m = channels.len();

    let mut timestamps = Vec::new();
    let mut values = Vec::new();
    let mut missing = Vec::new();
    let mut prev: Option<Stamp> = None;
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let stamp_text = record.get(0).unwrap_or_default();
        let stamp = parse_stamp(stamp_text).ok_or_else(|| Error::Parse {
            row,
            column: 0,
            text: stamp_text.to_string(),
        })?;
        if let Some(p) = &prev {
            if p.partial_cmp(&stamp) != Some(Ordering::Less) {
                return Err(Error::Data(format!(
                    "{}: timestamps not strictly increasing at row {row} (`{stamp_text}`)",
                    path.display()
                )));
            }
        }
        prev = Some(stamp);
        timestamps.push(stamp_text.to_string());
        let mut row_missing = false;
        for col in 1..=m {
            let cell = record.get(col).unwrap_or_default();
            if MISSING.contains(&cell.to_ascii_lowercase().as_str()) {
                row_missing = true;
                values.push(f64::NAN);
                continue;
            }
            match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => values.push(v),
                _ => {
                    return Err(Error::Parse {
                        row,
                        column: col,
                        text: cell.to_string(),
                    })
                }
            }
        }
        if row_missing {
            missing.push(row);
        }
    }
    if !missing.is_empty() {
        return Err(Error::MissingValues {
            path: path.to_path_buf(),
            rows: missing,
        });
    }
    let name = path
        .file_stem()
        .map_or_else(|| "series".to_string(), |s| s.to_string_lossy().into_owned());
    SeriesFrame::new(name, timestamps, values, channels)
}

/// Writes `frame` in the layout [`load_csv`] reads.
pub fn write_csv(frame: &SeriesFrame, path: &Path) -> Result<()> {
    let mut w = ::csv::Writer::from_path(path)?;
    let mut header = vec!["date".to_string()];
    header.extend(frame.channels.iter().cloned());
    w.write_record(&header)?;
    let m = frame.num_channels();
    for (row, ts) in frame.timestamps.iter().enumerate() {
        let mut rec = vec![ts.clone()];
        rec.extend(frame.values[row * m..(row + 1) * m].iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

//! CSV snapshot parsing.

use std::path::Path;

use chrono::NaiveDate;

use super::{OhlcvRecord, RawSeries};
use crate::error::IngestError;

/// A rejected input row and why it was dropped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowIssue {
    /// 1-based line number in the file.
    pub line: usize,
    pub reason: String,
}

const REQUIRED: [&str; 6] = ["Date", "Open", "High", "Low", "Close", "Volume"];

/// Parse a daily OHLCV snapshot.
///
/// The header must contain Date, Open, High, Low, Close and Volume in any
/// order and any case; an Adj Close column is tolerated and ignored. Rows
/// with empty or non-numeric fields, bad dates, non-positive prices, negative
/// volume, or OHLC values outside the low/high bracket are dropped and
/// reported in the returned issue list. Valid records come back sorted by
/// date. Duplicate dates, a missing required column, or fewer than two valid
/// rows are hard errors.
pub fn parse_csv(path: &Path) -> Result<(RawSeries, Vec<RowIssue>), IngestError> {
    let mut reader = ::csv::ReaderBuilder::new()
        .flexible(true)
        .trim(::csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.kind() {
            ::csv::ErrorKind::Io(_) => {
                let msg = e.to_string();
                IngestError::Io {
                    path: path.to_path_buf(),
                    source: std::io::Error::new(std::io::ErrorKind::Other, msg),
                }
            }
            _ => IngestError::Csv { path: path.to_path_buf(), source: e },
        })?;

    let headers = reader
        .headers()
        .map_err(|e| IngestError::Csv { path: path.to_path_buf(), source: e })?
        .clone();
    let mut columns = [usize::MAX; 6];
    for (i, name) in REQUIRED.iter().enumerate() {
        match headers.iter().position(|h| h.eq_ignore_ascii_case(name)) {
            Some(idx) => columns[i] = idx,
            None => {
                return Err(IngestError::MissingColumn {
                    path: path.to_path_buf(),
                    column: name.to_string(),
                })
            }
        }
    }

    let mut rows: Vec<(OhlcvRecord, usize)> = Vec::new();
    let mut issues: Vec<RowIssue> = Vec::new();
    for (row_idx, result) in reader.records().enumerate() {
        let record = result.map_err(|e| IngestError::Csv { path: path.to_path_buf(), source: e })?;
        let line = record
            .position()
            .map(|p| p.line() as usize)
            .unwrap_or(row_idx + 2);
        match parse_row(&record, &columns) {
            Ok(rec) => rows.push((rec, line)),
            Err(reason) => issues.push(RowIssue { line, reason }),
        }
    }

    if rows.len() < 2 {
        return Err(IngestError::TooFewRows {
            path: path.to_path_buf(),
            valid: rows.len(),
            rejected: issues.len(),
        });
    }

    rows.sort_by_key(|(rec, _)| rec.date);
    for pair in rows.windows(2) {
        if pair[0].0.date == pair[1].0.date {
            return Err(IngestError::DuplicateDate {
                path: path.to_path_buf(),
                date: pair[0].0.date.to_string(),
                first: pair[0].1,
                second: pair[1].1,
            });
        }
    }

    let symbol = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "unknown".to_string());
    let records = rows.into_iter().map(|(rec, _)| rec).collect();
    Ok((RawSeries { symbol, records }, issues))
}

fn parse_row(record: &::csv::StringRecord, columns: &[usize; 6]) -> Result<OhlcvRecord, String> {
    let field = |i: usize, name: &str| -> Result<&str, String> {
        match record.get(columns[i]) {
            Some(v) if !v.is_empty() => Ok(v),
            Some(_) => Err(format!("empty {name} field")),
            None => Err(format!("row too short for {name} column")),
        }
    };
    let number = |i: usize, name: &str| -> Result<f64, String> {
        let raw = field(i, name)?;
        let v: f64 = raw.parse().map_err(|_| format!("non-numeric {name} {raw:?}"))?;
        if !v.is_finite() {
            return Err(format!("non-finite {name} {raw:?}"));
        }
        Ok(v)
    };

    let date_raw = field(0, "Date")?;
    let date = NaiveDate::parse_from_str(date_raw, "%Y-%m-%d")
        .map_err(|_| format!("bad date {date_raw:?} (expected YYYY-MM-DD)"))?;
    let open = number(1, "Open")?;
    let high = number(2, "High")?;
    let low = number(3, "Low")?;
    let close = number(4, "Close")?;
    let volume = number(5, "Volume")?;

    for (name, v) in [("Open", open), ("High", high), ("Low", low), ("Close", close)] {
        if v <= 0.0 {
            return Err(format!("non-positive {name} price {v}"));
        }
    }
    if volume < 0.0 {
        return Err(format!("negative Volume {volume}"));
    }
    if !(low <= open && open <= high && low <= close && close <= high) {
        return Err(format!(
            "OHLC bracket violated: low {low}, open {open}, close {close}, high {high}"
        ));
    }
    Ok(OhlcvRecord { date, open, high, low, close, volume })
}

//! Smoothing, returns, normalization, splitting and windowing.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::dataset::{windows_in_range, Split, Window};
use super::{RawSeries, CLOSE_COLUMN, FEATURE_COLUMNS};
use crate::error::IngestError;
use crate::tensor::Tensor;

/// `output[i] = mean(input[i .. i+window))`; length shrinks by `window − 1`.
pub fn smooth_moving_average(column: &[f64], window: usize) -> Result<Vec<f64>, IngestError> {
    if window == 0 {
        return Err(IngestError::EmptyInput("smoothing window must be ≥ 1".into()));
    }
    if column.len() < window {
        return Err(IngestError::SeriesTooShort {
            len: column.len(),
            need: window,
            context: "moving-average smoothing".into(),
        });
    }
    let inv = 1.0 / window as f64;
    Ok(column
        .windows(window)
        .map(|w| w.iter().sum::<f64>() * inv)
        .collect())
}

/// Relative one-step changes `x[i+1]/x[i] − 1`; length shrinks by one.
pub fn to_returns(column: &[f64], column_name: &str) -> Result<Vec<f64>, IngestError> {
    if column.len() < 2 {
        return Err(IngestError::SeriesTooShort {
            len: column.len(),
            need: 2,
            context: format!("returns transform of {column_name}"),
        });
    }
    let mut out = Vec::with_capacity(column.len() - 1);
    for (i, pair) in column.windows(2).enumerate() {
        if pair[0] == 0.0 {
            return Err(IngestError::ZeroDenominator { row: i, column: column_name.to_string() });
        }
        out.push(pair[1] / pair[0] - 1.0);
    }
    Ok(out)
}

/// Replace zero entries with the column's smallest positive value so the
/// returns transform never divides by zero on halted days.
fn guard_zero_volume(column: &mut [f64]) -> Result<(), IngestError> {
    let smallest_positive = column.iter().copied().filter(|&v| v > 0.0).fold(f64::INFINITY, f64::min);
    for (i, v) in column.iter_mut().enumerate() {
        if *v == 0.0 {
            if !smallest_positive.is_finite() {
                return Err(IngestError::ZeroDenominator { row: i, column: "Volume".into() });
            }
            *v = smallest_positive;
        }
    }
    Ok(())
}

/// Smoothed-and-returned feature rows for one enterprise.
#[derive(Debug, Clone)]
pub struct FeatureMatrix {
    /// T×5 values in [`FEATURE_COLUMNS`] order, before normalization.
    pub values: Tensor,
    /// 0-based row index within this series; feeds Time2Vec.
    pub day_index: Vec<i64>,
}

impl FeatureMatrix {
    pub fn len(&self) -> usize {
        self.day_index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.day_index.is_empty()
    }
}

/// Smooth all five columns, guard zero volume, then take returns.
/// Raw length R and window w yield T = R − w feature rows.
pub fn feature_matrix(raw: &RawSeries, smooth_window: usize) -> Result<FeatureMatrix, IngestError> {
    if raw.records.is_empty() {
        return Err(IngestError::EmptyInput(format!("series {} has no records", raw.symbol)));
    }
    let extract: [fn(&super::OhlcvRecord) -> f64; 5] = [
        |r| r.volume,
        |r| r.open,
        |r| r.high,
        |r| r.low,
        |r| r.close,
    ];
    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(5);
    for (c, get) in extract.iter().enumerate() {
        let column: Vec<f64> = raw.records.iter().map(get).collect();
        let mut smoothed = smooth_moving_average(&column, smooth_window)?;
        if c == 0 {
            guard_zero_volume(&mut smoothed)?;
        }
        columns.push(to_returns(&smoothed, FEATURE_COLUMNS[c])?);
    }
    let t = columns[0].len();
    let mut data = Vec::with_capacity(t * 5);
    for r in 0..t {
        for (c, column) in columns.iter().enumerate() {
            let v = column[r];
            if !v.is_finite() {
                return Err(IngestError::NonFiniteFeature {
                    row: r,
                    column: FEATURE_COLUMNS[c].to_string(),
                });
            }
            data.push(v);
        }
    }
    Ok(FeatureMatrix {
        values: Tensor::new(vec![t, 5], data).expect("feature matrix shape"),
        day_index: (0..t as i64).collect(),
    })
}

/// Per-column extrema fitted on the training rows only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationParams {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

/// Fit per-column min/max over `rows` of `matrix`. Callers pass the training
/// range only; validation and test rows must never influence the result.
pub fn minmax_fit(matrix: &Tensor, rows: Range<usize>) -> Result<NormalizationParams, IngestError> {
    let shape = matrix.shape();
    if shape.len() != 2 {
        return Err(IngestError::EmptyInput("minmax_fit expects a 2-D matrix".into()));
    }
    let (n_rows, cols) = (shape[0], shape[1]);
    if rows.is_empty() || rows.end > n_rows {
        return Err(IngestError::EmptyInput(format!(
            "minmax_fit over rows {rows:?} of a {n_rows}-row matrix"
        )));
    }
    let mut min = vec![f64::INFINITY; cols];
    let mut max = vec![f64::NEG_INFINITY; cols];
    for r in rows {
        for c in 0..cols {
            let v = matrix.data()[r * cols + c];
            min[c] = min[c].min(v);
            max[c] = max[c].max(v);
        }
    }
    Ok(NormalizationParams { min, max })
}

fn check_norm_shape(matrix: &Tensor, params: &NormalizationParams) -> Result<usize, IngestError> {
    let shape = matrix.shape();
    if shape.len() != 2 || shape[1] != params.min.len() {
        return Err(IngestError::EmptyInput(format!(
            "normalization params cover {} columns, matrix shape is {shape:?}",
            params.min.len()
        )));
    }
    Ok(shape[1])
}

/// `y = (x − min)/(max − min)` per column; degenerate columns map to 0.
/// Values outside [0, 1] are expected for validation/test rows.
pub fn minmax_apply(matrix: &Tensor, params: &NormalizationParams) -> Result<Tensor, IngestError> {
    let cols = check_norm_shape(matrix, params)?;
    let mut out = matrix.clone();
    for (i, v) in out.data_mut().iter_mut().enumerate() {
        let c = i % cols;
        let range = params.max[c] - params.min[c];
        *v = if range == 0.0 { 0.0 } else { (*v - params.min[c]) / range };
    }
    Ok(out)
}

/// Inverse of [`minmax_apply`]: `x = y·(max − min) + min`; degenerate columns
/// map any input back to the fitted min.
pub fn minmax_invert(matrix: &Tensor, params: &NormalizationParams) -> Result<Tensor, IngestError> {
    let cols = check_norm_shape(matrix, params)?;
    let mut out = matrix.clone();
    for (i, v) in out.data_mut().iter_mut().enumerate() {
        let c = i % cols;
        let range = params.max[c] - params.min[c];
        *v = if range == 0.0 { params.min[c] } else { *v * range + params.min[c] };
    }
    Ok(out)
}

/// Denormalize a single value from one column.
pub fn denorm_value(y: f64, params: &NormalizationParams, column: usize) -> f64 {
    let range = params.max[column] - params.min[column];
    if range == 0.0 {
        params.min[column]
    } else {
        y * range + params.min[column]
    }
}

/// Contiguous chronological row ranges: train, then validation, then test.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitRanges {
    pub train: Range<usize>,
    pub validation: Range<usize>,
    pub test: Range<usize>,
}

impl SplitRanges {
    pub fn train_len(&self) -> usize {
        self.train.len()
    }

    pub fn validation_len(&self) -> usize {
        self.validation.len()
    }

    pub fn test_len(&self) -> usize {
        self.test.len()
    }
}

/// 80/10/10 chronological split with floor rounding; the remainder goes to
/// test.
pub fn split_train_val_test(t: usize) -> Result<SplitRanges, IngestError> {
    if t < 10 {
        return Err(IngestError::SeriesTooShort {
            len: t,
            need: 10,
            context: "80/10/10 split".into(),
        });
    }
    let train = (t as f64 * 0.8).floor() as usize;
    let val = (t as f64 * 0.1).floor() as usize;
    Ok(SplitRanges {
        train: 0..train,
        validation: train..train + val,
        test: train + val..t,
    })
}

/// Window an entire matrix as one range: N = T − seq_len − horizon + 1
/// windows, each targeting the close-return `horizon` rows past its end.
pub fn make_windows(
    matrix: &Tensor,
    day_index: &[i64],
    seq_len: usize,
    horizon: usize,
) -> Result<Vec<Window>, IngestError> {
    let t = matrix.shape()[0];
    if t < seq_len + horizon {
        return Err(IngestError::SeriesTooShort {
            len: t,
            need: seq_len + horizon,
            context: "windowing (no target row)".into(),
        });
    }
    windows_in_range(matrix, day_index, 0..t, seq_len, horizon, Split::Train)
}

/// Column index helper for reading a target back out of a matrix.
pub(crate) fn close_at(matrix: &Tensor, row: usize) -> f64 {
    let cols = matrix.shape()[1];
    matrix.data()[row * cols + CLOSE_COLUMN]
}

//! OHLCV ingestion and the preprocessing pipeline.
//!
//! Raw daily bars go through, in order: moving-average smoothing (window 10),
//! the returns transform `x[t+1]/x[t] − 1`, a chronological 80/10/10 split on
//! feature rows, min-max normalization fitted on the training rows only, and
//! windowing that never crosses a split boundary. Columns are fixed in the
//! order Volume, Open, High, Low, Close.

mod csv;
mod dataset;
mod transform;

pub use csv::{parse_csv, RowIssue};
pub use dataset::{DatasetManifest, Split, Window, WindowedDataset, DATASET_FORMAT};
pub use transform::{
    denorm_value, feature_matrix, make_windows, minmax_apply, minmax_fit, minmax_invert,
    smooth_moving_average, split_train_val_test, to_returns, FeatureMatrix, NormalizationParams,
    SplitRanges,
};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::IngestError;

/// Column order of every feature matrix and window.
pub const FEATURE_COLUMNS: [&str; 5] = ["Volume", "Open", "High", "Low", "Close"];

/// Index of the close-return column, the forecast target.
pub const CLOSE_COLUMN: usize = 4;

/// One trading day of raw data. Prices are strictly positive and bracketed by
/// the low/high range; volume may be zero on halted days.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OhlcvRecord {
    pub date: NaiveDate,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
    pub volume: f64,
}

/// Date-ordered daily bars for one enterprise.
#[derive(Debug, Clone)]
pub struct RawSeries {
    pub symbol: String,
    pub records: Vec<OhlcvRecord>,
}

/// Pipeline settings; hashed into dataset manifests so artifacts built under
/// different settings never silently mix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub smooth_window: usize,
    pub seq_len: usize,
    pub horizon: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self { smooth_window: 10, seq_len: 16, horizon: 1 }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), IngestError> {
        if self.smooth_window == 0 || self.seq_len == 0 || self.horizon == 0 {
            return Err(IngestError::EmptyInput(
                "smooth_window, seq_len and horizon must all be ≥ 1".into(),
            ));
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("pipeline config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

/// Run the full pipeline for one enterprise.
pub fn build_dataset(raw: &RawSeries, cfg: &PipelineConfig) -> Result<WindowedDataset, IngestError> {
    cfg.validate()?;
    let features = feature_matrix(raw, cfg.smooth_window)?;
    let t = features.len();
    let ranges = split_train_val_test(t)?;
    let norm = minmax_fit(&features.values, 0..ranges.train_len())?;
    let normalized = minmax_apply(&features.values, &norm)?;

    let mut windows = Vec::new();
    for (split, range) in [
        (Split::Train, ranges.train.clone()),
        (Split::Validation, ranges.validation.clone()),
        (Split::Test, ranges.test.clone()),
    ] {
        windows.extend(dataset::windows_in_range(
            &normalized,
            &features.day_index,
            range,
            cfg.seq_len,
            cfg.horizon,
            split,
        )?);
    }
    WindowedDataset::assemble(raw.symbol.clone(), cfg, windows, norm)
}

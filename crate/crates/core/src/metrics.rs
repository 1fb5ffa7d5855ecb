//! Evaluation metrics and report assembly.
//!
//! MSE, MAE and MAPE are computed over aligned actual/forecast vectors; MAPE
//! is reported in percent and skips entries whose actual value is below
//! 1e−8 in magnitude, where the percentage is undefined. Reports carry both
//! normalized metrics (the headline numbers) and denormalized duplicates.

use serde::{Deserialize, Serialize};

use crate::error::MetricsError;
use crate::ingest::{denorm_value, NormalizationParams, Split, WindowedDataset, CLOSE_COLUMN};
use crate::model::ForecastModel;

/// Actual values this close to zero are excluded from the MAPE mean.
pub const MAPE_GUARD: f64 = 1e-8;

fn check_lengths(actual: &[f64], forecast: &[f64]) -> Result<(), MetricsError> {
    if actual.is_empty() {
        return Err(MetricsError::EmptyInput("actual"));
    }
    if actual.len() != forecast.len() {
        return Err(MetricsError::LengthMismatch {
            actual: actual.len(),
            forecast: forecast.len(),
        });
    }
    Ok(())
}

/// Mean squared error.
pub fn mse(actual: &[f64], forecast: &[f64]) -> Result<f64, MetricsError> {
    check_lengths(actual, forecast)?;
    let sum: f64 = actual.iter().zip(forecast).map(|(a, f)| (a - f) * (a - f)).sum();
    Ok(sum / actual.len() as f64)
}

/// Mean absolute error.
pub fn mae(actual: &[f64], forecast: &[f64]) -> Result<f64, MetricsError> {
    check_lengths(actual, forecast)?;
    let sum: f64 = actual.iter().zip(forecast).map(|(a, f)| (a - f).abs()).sum();
    Ok(sum / actual.len() as f64)
}

/// Mean absolute percentage error, in percent. Entries with
/// `|actual| < MAPE_GUARD` are excluded; erring when nothing remains.
pub fn mape(actual: &[f64], forecast: &[f64]) -> Result<f64, MetricsError> {
    check_lengths(actual, forecast)?;
    let mut sum = 0.0;
    let mut kept = 0usize;
    for (a, f) in actual.iter().zip(forecast) {
        if a.abs() < MAPE_GUARD {
            continue;
        }
        sum += ((a - f) / a).abs();
        kept += 1;
    }
    if kept == 0 {
        return Err(MetricsError::AllExcluded);
    }
    Ok(sum / kept as f64 * 100.0)
}

/// A next-step forecaster evaluated window by window.
pub trait Forecaster {
    /// Predict the normalized close-return one step past the window that
    /// spans `features` (seq_len × n_features, normalized).
    fn forecast(&self, features: &crate::Tensor, time_index: &[i64]) -> f64;
}

/// Naive baseline: tomorrow's close-return equals the last one observed.
pub struct PersistenceBaseline;

impl Forecaster for PersistenceBaseline {
    fn forecast(&self, features: &crate::Tensor, _time_index: &[i64]) -> f64 {
        let rows = features.shape()[0];
        let cols = features.shape()[1];
        features.data()[(rows - 1) * cols + CLOSE_COLUMN]
    }
}

impl Forecaster for ForecastModel {
    fn forecast(&self, features: &crate::Tensor, time_index: &[i64]) -> f64 {
        self.predict(features, time_index).expect("windows are validated at ingest")
    }
}

/// Metric triple for one split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitMetrics {
    pub mse: f64,
    pub mae: f64,
    pub mape: f64,
}

fn split_metrics(actual: &[f64], forecast: &[f64]) -> Result<SplitMetrics, MetricsError> {
    Ok(SplitMetrics {
        mse: mse(actual, forecast)?,
        mae: mae(actual, forecast)?,
        mape: mape(actual, forecast).unwrap_or(f64::NAN),
    })
}

/// One predicted/actual pair, in both normalized and return units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub window_index: usize,
    pub split: Split,
    pub actual_norm: f64,
    pub forecast_norm: f64,
    pub actual_return: f64,
    pub forecast_return: f64,
}

/// Full evaluation of one model on one enterprise's dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub symbol: String,
    pub strategy: String,
    pub seed: u64,
    pub config_hash: String,
    pub validation: SplitMetrics,
    pub test: SplitMetrics,
    /// Same splits measured on denormalized returns.
    pub validation_denorm: SplitMetrics,
    pub test_denorm: SplitMetrics,
    pub series: Vec<SeriesPoint>,
}

/// Evaluate `model` on the validation and test splits of `dataset`.
pub fn build_report(
    model: &dyn Forecaster,
    dataset: &WindowedDataset,
    norm: &NormalizationParams,
    strategy: &str,
    seed: u64,
) -> Result<EvalReport, MetricsError> {
    let mut series = Vec::new();
    let mut actual = [Vec::new(), Vec::new()];
    let mut forecast = [Vec::new(), Vec::new()];

    for (window_index, w) in dataset.windows.iter().enumerate() {
        if w.split == Split::Train {
            continue;
        }
        let pred = model.forecast(&w.features, &w.time_index);
        let slot = if w.split == Split::Validation { 0 } else { 1 };
        actual[slot].push(w.target);
        forecast[slot].push(pred);
        series.push(SeriesPoint {
            window_index,
            split: w.split,
            actual_norm: w.target,
            forecast_norm: pred,
            actual_return: denorm_value(w.target, norm, CLOSE_COLUMN),
            forecast_return: denorm_value(pred, norm, CLOSE_COLUMN),
        });
    }

    if actual[0].is_empty() {
        return Err(MetricsError::EmptySplit("validation"));
    }
    if actual[1].is_empty() {
        return Err(MetricsError::EmptySplit("test"));
    }

    let denorm =
        |v: &[f64]| -> Vec<f64> { v.iter().map(|&y| denorm_value(y, norm, CLOSE_COLUMN)).collect() };
    Ok(EvalReport {
        symbol: dataset.symbol.clone(),
        strategy: strategy.to_string(),
        seed,
        config_hash: dataset.config_hash.clone(),
        validation: split_metrics(&actual[0], &forecast[0])?,
        test: split_metrics(&actual[1], &forecast[1])?,
        validation_denorm: split_metrics(&denorm(&actual[0]), &denorm(&forecast[0]))?,
        test_denorm: split_metrics(&denorm(&actual[1]), &denorm(&forecast[1]))?,
        series,
    })
}

impl EvalReport {
    /// Plot export: one row per evaluated window.
    pub fn to_plot_csv(&self) -> String {
        let mut out =
            String::from("window_index,split,actual_norm,forecast_norm,actual_return,forecast_return\n");
        for p in &self.series {
            out.push_str(&format!(
                "{},{},{:.17e},{:.17e},{:.17e},{:.17e}\n",
                p.window_index,
                p.split.name(),
                p.actual_norm,
                p.forecast_norm,
                p.actual_return,
                p.forecast_return
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{build_dataset, PipelineConfig};
    use crate::synth::{noisy_sine_series, SineSpec};

    #[test]
    fn equal_vectors_are_perfect() {
        let v = [0.3, -0.2, 1.7];
        assert_eq!(mse(&v, &v).unwrap(), 0.0);
        assert_eq!(mae(&v, &v).unwrap(), 0.0);
        assert_eq!(mape(&v, &v).unwrap(), 0.0);
    }

    #[test]
    fn residual_sign_symmetry() {
        let a = [1.0, 2.0, 3.0];
        let over = [1.5, 2.5, 3.5];
        let under = [0.5, 1.5, 2.5];
        assert_eq!(mse(&a, &over).unwrap(), mse(&a, &under).unwrap());
        assert_eq!(mae(&a, &over).unwrap(), mae(&a, &under).unwrap());
    }

    #[test]
    fn length_and_empty_errors() {
        assert!(matches!(mse(&[], &[]), Err(MetricsError::EmptyInput("actual"))));
        assert!(matches!(
            mae(&[1.0], &[1.0, 2.0]),
            Err(MetricsError::LengthMismatch { actual: 1, forecast: 2 })
        ));
        assert!(matches!(mape(&[0.0], &[5.0]), Err(MetricsError::AllExcluded)));
    }

    #[test]
    fn persistence_baseline_reads_last_close() {
        let features = crate::Tensor::new(
            vec![2, 5],
            vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0],
        )
        .unwrap();
        assert_eq!(PersistenceBaseline.forecast(&features, &[0, 1]), 1.0);
    }

    #[test]
    fn report_covers_validation_and_test_and_roundtrips() {
        let spec = SineSpec { n: 400, ..SineSpec::default() };
        let ds = build_dataset(&noisy_sine_series(&spec), &PipelineConfig::default()).unwrap();
        let report = build_report(&PersistenceBaseline, &ds, &ds.norm, "solo", 9).unwrap();
        let counts = ds.split_counts();
        assert_eq!(report.series.len(), counts[1] + counts[2]);
        assert!(report.validation.mse > 0.0);
        assert!(report.test.mae <= report.test.mse.sqrt() + 1e-15);

        let json = serde_json::to_string_pretty(&report).unwrap();
        let back: EvalReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back.test, report.test);
        assert_eq!(back.series, report.series);

        let csv = report.to_plot_csv();
        assert_eq!(csv.lines().count(), 1 + report.series.len());
        assert!(csv.lines().nth(1).unwrap().contains("validation"));
    }

    #[test]
    fn perfect_stub_scores_zero_everywhere() {
        struct Oracle<'a>(&'a WindowedDataset);
        impl Forecaster for Oracle<'_> {
            fn forecast(&self, features: &crate::Tensor, _t: &[i64]) -> f64 {
                self.0
                    .windows
                    .iter()
                    .find(|w| w.features.data() == features.data())
                    .expect("window present")
                    .target
            }
        }
        let spec = SineSpec { n: 400, seed: 11, ..SineSpec::default() };
        let ds = build_dataset(&noisy_sine_series(&spec), &PipelineConfig::default()).unwrap();
        let report = build_report(&Oracle(&ds), &ds, &ds.norm, "solo", 1).unwrap();
        assert_eq!(report.test.mse, 0.0);
        assert_eq!(report.test.mae, 0.0);
        assert_eq!(report.validation.mse, 0.0);
        assert_eq!(report.test_denorm.mse, 0.0);
    }
}

//! Core engine for federated time-series forecasting.
//!
//! The crate provides the full experiment lifecycle for next-step stock-return
//! prediction with a Time2Vec-embedded transformer encoder:
//!
//! - [`ingest`] — OHLCV CSV parsing and the preprocessing pipeline (moving-average
//!   smoothing, returns, min-max normalization, chronological splits, windowing).
//! - [`tensor`] / [`tape`] — dense f64 tensors with reverse-mode gradients and a
//!   finite-difference gradient checker.
//! - [`model`] — the transformer encoder regression model (Time2Vec embedding,
//!   multi-head self-attention, feed-forward blocks, pooling, regression head).
//! - [`optimizer`] — Adam for local client training.
//! - [`federation`] — in-process simulation of SOLO, FedAvg and FedAtt training.
//! - [`metrics`] — MSE/MAE/MAPE evaluation and report assembly.
//! - [`experiment`] — configuration, orchestration and on-disk artifacts shared
//!   with the `fedseries` CLI.
//!
//! Training and ingestion parallelize across clients, samples and symbols with
//! rayon when the `parallel` feature (default) is enabled; results are identical
//! to the sequential fallback regardless of worker count.

pub mod error;
pub mod experiment;
pub mod federation;
pub mod ingest;
pub mod metrics;
pub mod model;
pub mod optimizer;
pub mod params;
pub mod parallel;
pub mod synth;
pub mod tape;
pub mod tensor;

pub use error::{FedError, IngestError, MetricsError, NumericsError};
pub use params::ParamStore;
pub use tensor::Tensor;

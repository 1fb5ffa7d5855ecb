//! Error types shared across the crate.

use std::path::PathBuf;

use thiserror::Error;

/// Errors from tensor arithmetic and the autodiff tape.
#[derive(Debug, Error)]
pub enum NumericsError {
    #[error("shape mismatch in {op}: lhs {lhs:?}, rhs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op} expects rank {expected}, got shape {shape:?}")]
    BadRank {
        op: &'static str,
        expected: usize,
        shape: Vec<usize>,
    },
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NotScalar(Vec<usize>),
    #[error("non-finite value produced in {0}")]
    NonFinite(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("unknown parameter {0:?}")]
    UnknownParam(String),
}

/// Errors from CSV parsing and the preprocessing pipeline.
#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: missing column {column:?}")]
    MissingColumn { path: PathBuf, column: String },
    #[error("{path}: fewer than 2 valid rows ({valid} valid, {rejected} rejected)")]
    TooFewRows {
        path: PathBuf,
        valid: usize,
        rejected: usize,
    },
    #[error("{path}: duplicate date {date} (rows {first} and {second})")]
    DuplicateDate {
        path: PathBuf,
        date: String,
        first: usize,
        second: usize,
    },
    #[error("csv error in {path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("series too short: {len} rows, need at least {need} ({context})")]
    SeriesTooShort {
        len: usize,
        need: usize,
        context: String,
    },
    #[error("zero denominator in returns at row {row}, column {column}")]
    ZeroDenominator { row: usize, column: String },
    #[error("non-finite feature value at row {row}, column {column}")]
    NonFiniteFeature { row: usize, column: String },
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("dataset artifact error: {0}")]
    Artifact(String),
}

/// Errors from federated orchestration and checkpointing.
#[derive(Debug, Error)]
pub enum FedError {
    #[error("client {client}: {source}")]
    Client {
        client: String,
        #[source]
        source: Box<FedError>,
    },
    #[error("empty client list")]
    NoClients,
    #[error("empty training split")]
    EmptyTrainingSplit,
    #[error("training diverged: non-finite loss at epoch {epoch}, batch {batch}")]
    Diverged { epoch: usize, batch: usize },
    #[error("invalid federation config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

/// Errors from metric computation and report assembly.
#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("empty input to {0}")]
    EmptyInput(&'static str),
    #[error("length mismatch: actual {actual}, forecast {forecast}")]
    LengthMismatch { actual: usize, forecast: usize },
    #[error("all entries excluded by the zero-actual guard")]
    AllExcluded,
    #[error("empty split: {0}")]
    EmptySplit(&'static str),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Errors from the experiment lifecycle, classified for process exit codes:
/// bad input or missing artifacts exit 1, internal faults (divergence,
/// numerics) exit 2.
#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Fed(#[from] FedError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("{0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl ExperimentError {
    pub fn exit_code(&self) -> i32 {
        fn fed_code(e: &FedError) -> i32 {
            match e {
                FedError::Client { source, .. } => fed_code(source),
                FedError::Diverged { .. } | FedError::Numerics(_) => 2,
                _ => 1,
            }
        }
        match self {
            ExperimentError::Ingest(_) | ExperimentError::Config(_) | ExperimentError::Io { .. } => 1,
            ExperimentError::Fed(e) => fed_code(e),
            ExperimentError::Metrics(MetricsError::Numerics(_)) => 2,
            ExperimentError::Metrics(_) => 1,
        }
    }
}

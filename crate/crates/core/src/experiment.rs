//! Experiment lifecycle: one JSON config drives ingest, training, evaluation
//! and plot export, writing every artifact under the configured output
//! directory.
//!
//! Layout under `out_dir`:
//!   datasets/<SYMBOL>/            windowed dataset artifacts
//!   checkpoints/<strategy>/...    `global/` for federated runs, one
//!                                 directory per symbol for solo
//!   traces/<strategy>.jsonl       one record per round (or per solo client)
//!   reports/<strategy>/<SYMBOL>.json
//!   reports/comparison.csv        symbol × strategy × MSE/MAE/MAPE
//!   plots/<SYMBOL>_<strategy>.csv

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{ExperimentError, FedError, IngestError};
use crate::federation::{
    run_federation, run_solo, ClientState, FedConfig, RoundTrace, Strategy,
};
use crate::ingest::{build_dataset, parse_csv, PipelineConfig, WindowedDataset};
use crate::metrics::{build_report, EvalReport};
use crate::model::{load_checkpoint, save_checkpoint, ForecastModel, ModelConfig};
use crate::parallel;

/// Everything one experiment needs, loaded from a single JSON file. Field
/// declaration order is the canonical key order used for hashing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Directory of per-symbol `<SYMBOL>.csv` files.
    pub data_dir: PathBuf,
    pub symbols: Vec<String>,
    pub out_dir: PathBuf,
    pub seed: u64,
    #[serde(default)]
    pub pipeline: PipelineConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub fed: FedConfig,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ExperimentError::Io { path: path.to_path_buf(), source: e })?;
        let cfg: Self = serde_json::from_str(&text)
            .map_err(|e| ExperimentError::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.symbols.is_empty() {
            return Err(ExperimentError::Config("symbols list is empty".into()));
        }
        self.pipeline.validate()?;
        self.model.validate().map_err(|e| ExperimentError::Config(e.to_string()))?;
        self.fed.validate()?;
        if self.pipeline.seq_len != self.model.seq_len {
            return Err(ExperimentError::Config(format!(
                "pipeline seq_len {} and model seq_len {} must agree",
                self.pipeline.seq_len, self.model.seq_len
            )));
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("experiment config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    /// The federation settings with the experiment seed and strategy applied.
    fn fed_for(&self, strategy: Strategy) -> FedConfig {
        FedConfig { strategy, seed: self.seed, ..self.fed.clone() }
    }

    pub fn csv_path(&self, symbol: &str) -> PathBuf {
        self.data_dir.join(format!("{symbol}.csv"))
    }

    pub fn dataset_dir(&self, symbol: &str) -> PathBuf {
        self.out_dir.join("datasets").join(symbol)
    }

    pub fn checkpoint_dir(&self, strategy: Strategy) -> PathBuf {
        self.out_dir.join("checkpoints").join(strategy.name())
    }

    pub fn trace_path(&self, strategy: Strategy) -> PathBuf {
        self.out_dir.join("traces").join(format!("{}.jsonl", strategy.name()))
    }

    pub fn report_dir(&self, strategy: Strategy) -> PathBuf {
        self.out_dir.join("reports").join(strategy.name())
    }

    pub fn comparison_path(&self) -> PathBuf {
        self.out_dir.join("reports").join("comparison.csv")
    }

    pub fn plot_dir(&self) -> PathBuf {
        self.out_dir.join("plots")
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), ExperimentError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)
            .map_err(|e| ExperimentError::Io { path: parent.to_path_buf(), source: e })?;
    }
    std::fs::write(path, bytes)
        .map_err(|e| ExperimentError::Io { path: path.to_path_buf(), source: e })
}

/// Per-symbol outcome of an ingest run.
#[derive(Debug, Clone, Serialize)]
pub struct SymbolIngest {
    pub symbol: String,
    /// Train/validation/test window counts on success.
    pub split_counts: Option<[usize; 3]>,
    pub rejected_rows: usize,
    pub error: Option<String>,
}

/// Parse and window every configured symbol. All symbols are attempted;
/// failures are reported per symbol so one malformed file cannot hide the
/// others' artifacts.
pub fn run_ingest(
    cfg: &ExperimentConfig,
    workers: Option<usize>,
) -> Result<Vec<SymbolIngest>, ExperimentError> {
    cfg.validate()?;
    let outcomes = parallel::with_workers(workers, || {
        parallel::map_items(&cfg.symbols, |symbol| -> Result<SymbolIngest, IngestError> {
            let (raw, issues) = parse_csv(&cfg.csv_path(symbol))?;
            let dataset = build_dataset(&raw, &cfg.pipeline)?;
            dataset.save_dir(&cfg.dataset_dir(symbol))?;
            Ok(SymbolIngest {
                symbol: symbol.clone(),
                split_counts: Some(dataset.split_counts()),
                rejected_rows: issues.len(),
                error: None,
            })
        })
    });
    Ok(cfg
        .symbols
        .iter()
        .zip(outcomes)
        .map(|(symbol, r)| match r {
            Ok(s) => s,
            Err(e) => SymbolIngest {
                symbol: symbol.clone(),
                split_counts: None,
                rejected_rows: 0,
                error: Some(e.to_string()),
            },
        })
        .collect())
}

fn load_dataset(cfg: &ExperimentConfig, symbol: &str) -> Result<WindowedDataset, ExperimentError> {
    let dir = cfg.dataset_dir(symbol);
    if !dir.join("manifest.json").exists() {
        return Err(ExperimentError::Config(format!(
            "no dataset artifact for {symbol} at {}; run ingest first",
            dir.display()
        )));
    }
    let dataset = WindowedDataset::load_dir(&dir)?;
    if dataset.config_hash != cfg.pipeline.hash() {
        return Err(ExperimentError::Config(format!(
            "dataset artifact for {symbol} was built under a different pipeline config; rerun ingest"
        )));
    }
    Ok(dataset)
}

fn build_clients(
    cfg: &ExperimentConfig,
    fed: &FedConfig,
) -> Result<Vec<ClientState>, ExperimentError> {
    cfg.symbols
        .iter()
        .map(|symbol| {
            let dataset = load_dataset(cfg, symbol)?;
            ClientState::new(symbol.clone(), dataset, &cfg.model, fed).map_err(|e| {
                ExperimentError::Fed(FedError::Client {
                    client: symbol.clone(),
                    source: Box::new(e),
                })
            })
        })
        .collect()
}

/// Solo runs have no rounds; the trace records each client once.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SoloTraceRecord {
    pub client_id: String,
    pub epochs: usize,
    pub n_train: usize,
    pub val_loss: Option<f64>,
}

/// Outcome of a training run.
#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub strategy: Strategy,
    /// Checkpoint directories written, one per model.
    pub checkpoints: Vec<PathBuf>,
    pub trace_path: PathBuf,
    /// Validation losses in client order from the final round (federated) or
    /// the solo run.
    pub final_val_losses: Vec<Option<f64>>,
}

/// Train the configured symbols under `strategy` and write checkpoints plus
/// the aggregation trace.
pub fn run_train(
    cfg: &ExperimentConfig,
    strategy: Strategy,
    workers: Option<usize>,
) -> Result<TrainSummary, ExperimentError> {
    cfg.validate()?;
    let fed = cfg.fed_for(strategy);
    let mut clients = build_clients(cfg, &fed)?;
    let provenance = format!("{} training, experiment {}", strategy.name(), cfg.hash());
    let trace_path = cfg.trace_path(strategy);

    match strategy {
        Strategy::Solo => {
            let updates = parallel::with_workers(workers, || run_solo(&mut clients, &cfg.model, &fed))?;
            let mut lines = String::new();
            let mut checkpoints = Vec::new();
            let mut final_val_losses = Vec::new();
            for u in &updates {
                let record = SoloTraceRecord {
                    client_id: u.client_id.clone(),
                    epochs: fed.solo_epochs,
                    n_train: u.n_train,
                    val_loss: u.val_loss,
                };
                lines.push_str(&serde_json::to_string(&record).expect("trace serializes"));
                lines.push('\n');
                let dir = cfg.checkpoint_dir(strategy).join(&u.client_id);
                let model =
                    ForecastModel { config: cfg.model.clone(), params: u.params.clone() };
                save_checkpoint(&dir, &model, cfg.seed, &provenance)?;
                checkpoints.push(dir);
                final_val_losses.push(u.val_loss);
            }
            write_file(&trace_path, lines.as_bytes())?;
            Ok(TrainSummary { strategy, checkpoints, trace_path, final_val_losses })
        }
        Strategy::FedAvg | Strategy::FedAtt => {
            let (global, trace) =
                parallel::with_workers(workers, || run_federation(&mut clients, &cfg.model, &fed))?;
            let mut lines = String::new();
            for record in &trace {
                lines.push_str(&serde_json::to_string(record).expect("trace serializes"));
                lines.push('\n');
            }
            write_file(&trace_path, lines.as_bytes())?;
            let dir = cfg.checkpoint_dir(strategy).join("global");
            let model = ForecastModel { config: cfg.model.clone(), params: global };
            save_checkpoint(&dir, &model, cfg.seed, &provenance)?;
            let final_val_losses =
                trace.last().map(|t| t.val_losses.clone()).unwrap_or_default();
            Ok(TrainSummary {
                strategy,
                checkpoints: vec![dir],
                trace_path,
                final_val_losses,
            })
        }
    }
}

/// Load the checkpoint for (`strategy`, `symbol`), honoring an explicit
/// override directory when given.
fn checkpoint_for(
    cfg: &ExperimentConfig,
    strategy: Strategy,
    symbol: &str,
    checkpoint: Option<&Path>,
) -> Result<ForecastModel, ExperimentError> {
    let dir = match (checkpoint, strategy) {
        (Some(dir), _) => dir.to_path_buf(),
        (None, Strategy::Solo) => cfg.checkpoint_dir(strategy).join(symbol),
        (None, _) => cfg.checkpoint_dir(strategy).join("global"),
    };
    let (model, manifest) = load_checkpoint(&dir)?;
    if manifest.config != cfg.model {
        return Err(ExperimentError::Config(format!(
            "checkpoint {} was trained under a different model config",
            dir.display()
        )));
    }
    Ok(model)
}

/// Evaluate `strategy` on every configured symbol, writing per-symbol report
/// JSON and refreshing the comparison table.
pub fn run_evaluate(
    cfg: &ExperimentConfig,
    strategy: Strategy,
    checkpoint: Option<&Path>,
    workers: Option<usize>,
) -> Result<Vec<EvalReport>, ExperimentError> {
    cfg.validate()?;
    let mut reports = Vec::with_capacity(cfg.symbols.len());
    for symbol in &cfg.symbols {
        let dataset = load_dataset(cfg, symbol)?;
        let model = checkpoint_for(cfg, strategy, symbol, checkpoint)?;
        let report = parallel::with_workers(workers, || {
            build_report(&model, &dataset, &dataset.norm, strategy.name(), cfg.seed)
        })?;
        let path = cfg.report_dir(strategy).join(format!("{symbol}.json"));
        let json = serde_json::to_string_pretty(&report)
            .map_err(|e| ExperimentError::Config(format!("report serialization: {e}")))?;
        write_file(&path, (json + "\n").as_bytes())?;
        reports.push(report);
    }
    write_comparison(cfg)?;
    Ok(reports)
}

/// Rebuild `reports/comparison.csv` from every report JSON present, in
/// Table I layout: one row per symbol × strategy with test-split metrics on
/// normalized values.
pub fn write_comparison(cfg: &ExperimentConfig) -> Result<PathBuf, ExperimentError> {
    let mut rows = Vec::new();
    for strategy in Strategy::ALL {
        for symbol in &cfg.symbols {
            let path = cfg.report_dir(strategy).join(format!("{symbol}.json"));
            let Ok(text) = std::fs::read_to_string(&path) else { continue };
            let report: EvalReport = serde_json::from_str(&text)
                .map_err(|e| ExperimentError::Config(format!("{}: {e}", path.display())))?;
            rows.push((symbol.clone(), strategy, report.test));
        }
    }
    rows.sort_by(|a, b| a.0.cmp(&b.0).then(
        Strategy::ALL.iter().position(|s| *s == a.1).cmp(
            &Strategy::ALL.iter().position(|s| *s == b.1),
        ),
    ));
    let mut csv = String::from("symbol,strategy,mse,mae,mape\n");
    for (symbol, strategy, m) in rows {
        csv.push_str(&format!(
            "{symbol},{},{:.6e},{:.6e},{:.4}\n",
            strategy.name(),
            m.mse,
            m.mae,
            m.mape
        ));
    }
    let path = cfg.comparison_path();
    write_file(&path, csv.as_bytes())?;
    Ok(path)
}

/// Export the predicted/actual series of one report JSON to a plot CSV under
/// `out`; returns the written path.
pub fn run_export_plot(report_path: &Path, out: &Path) -> Result<PathBuf, ExperimentError> {
    let text = std::fs::read_to_string(report_path)
        .map_err(|e| ExperimentError::Io { path: report_path.to_path_buf(), source: e })?;
    let report: EvalReport = serde_json::from_str(&text)
        .map_err(|e| ExperimentError::Config(format!("{}: {e}", report_path.display())))?;
    let path = out.join(format!("{}_{}.csv", report.symbol, report.strategy));
    write_file(&path, report.to_plot_csv().as_bytes())?;
    Ok(path)
}

/// Parsed round records from a trace file.
pub fn read_trace(path: &Path) -> Result<Vec<RoundTrace>, ExperimentError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ExperimentError::Io { path: path.to_path_buf(), source: e })?;
    text.lines()
        .map(|line| {
            serde_json::from_str(line)
                .map_err(|e| ExperimentError::Config(format!("{}: {e}", path.display())))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{noisy_sine_series, to_csv_string, SineSpec};

    /// Tiny three-client experiment in a temp sandbox.
    fn sandbox() -> (tempfile::TempDir, ExperimentConfig) {
        let dir = tempfile::tempdir().unwrap();
        let data_dir = dir.path().join("data");
        std::fs::create_dir_all(&data_dir).unwrap();
        let symbols = ["AAA", "BBB", "CCC"];
        for (i, symbol) in symbols.iter().enumerate() {
            let spec = SineSpec {
                symbol: (*symbol).into(),
                n: 70,
                seed: 20 + i as u64,
                ..SineSpec::default()
            };
            let series = noisy_sine_series(&spec);
            std::fs::write(data_dir.join(format!("{symbol}.csv")), to_csv_string(&series))
                .unwrap();
        }
        let model = ModelConfig::tiny();
        let cfg = ExperimentConfig {
            data_dir,
            symbols: symbols.iter().map(|s| s.to_string()).collect(),
            out_dir: dir.path().join("out"),
            seed: 11,
            pipeline: PipelineConfig { seq_len: model.seq_len, ..PipelineConfig::default() },
            model,
            fed: FedConfig { rounds: 2, solo_epochs: 2, batch_size: 16, ..FedConfig::default() },
        };
        (dir, cfg)
    }

    #[test]
    fn config_roundtrips_and_hash_is_stable() {
        let (_dir, cfg) = sandbox();
        let json = serde_json::to_string_pretty(&cfg).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
        assert_eq!(cfg.hash().len(), 64);
    }

    #[test]
    fn seq_len_disagreement_is_rejected() {
        let (_dir, mut cfg) = sandbox();
        cfg.pipeline.seq_len = cfg.model.seq_len + 1;
        assert!(matches!(cfg.validate(), Err(ExperimentError::Config(_))));
    }

    #[test]
    fn ingest_writes_artifacts_and_reports_failures_per_symbol() {
        let (_dir, mut cfg) = sandbox();
        cfg.symbols.push("MISSING".into());
        let outcomes = run_ingest(&cfg, None).unwrap();
        assert_eq!(outcomes.len(), 4);
        assert!(outcomes[..3].iter().all(|o| o.error.is_none()));
        assert!(outcomes[3].error.as_deref().unwrap().contains("MISSING"));
        for symbol in &cfg.symbols[..3] {
            assert!(cfg.dataset_dir(symbol).join("manifest.json").exists());
        }
    }

    #[test]
    fn ingest_is_idempotent() {
        let (_dir, cfg) = sandbox();
        run_ingest(&cfg, None).unwrap();
        let manifest = cfg.dataset_dir("AAA").join("manifest.json");
        let first = std::fs::read(&manifest).unwrap();
        run_ingest(&cfg, None).unwrap();
        assert_eq!(first, std::fs::read(&manifest).unwrap());
    }

    #[test]
    fn full_lifecycle_writes_every_artifact() {
        let (_dir, cfg) = sandbox();
        run_ingest(&cfg, None).unwrap();

        let fed = run_train(&cfg, Strategy::FedAtt, None).unwrap();
        assert_eq!(fed.checkpoints.len(), 1);
        let trace = read_trace(&fed.trace_path).unwrap();
        assert_eq!(trace.len(), cfg.fed.rounds);

        let solo = run_train(&cfg, Strategy::Solo, None).unwrap();
        assert_eq!(solo.checkpoints.len(), 3);

        let reports = run_evaluate(&cfg, Strategy::FedAtt, None, None).unwrap();
        assert_eq!(reports.len(), 3);
        run_evaluate(&cfg, Strategy::Solo, None, None).unwrap();

        let comparison = std::fs::read_to_string(cfg.comparison_path()).unwrap();
        let rows: Vec<&str> = comparison.lines().collect();
        assert_eq!(rows[0], "symbol,strategy,mse,mae,mape");
        assert_eq!(rows.len(), 1 + 3 * 2, "3 symbols × 2 evaluated strategies");
        assert!(rows[1].starts_with("AAA,solo,"));
        assert!(rows[2].starts_with("AAA,fedatt,"));

        let report_path = cfg.report_dir(Strategy::FedAtt).join("AAA.json");
        let plot = run_export_plot(&report_path, &cfg.plot_dir()).unwrap();
        let csv = std::fs::read_to_string(&plot).unwrap();
        let ds = load_dataset(&cfg, "AAA").unwrap();
        let counts = ds.split_counts();
        assert_eq!(csv.lines().count(), 1 + counts[1] + counts[2]);
    }

    #[test]
    fn missing_dataset_names_the_fix() {
        let (_dir, cfg) = sandbox();
        let err = run_train(&cfg, Strategy::FedAvg, None).unwrap_err();
        assert!(err.to_string().contains("run ingest first"));
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn evaluation_is_deterministic_across_runs_and_workers() {
        let (_dir, cfg) = sandbox();
        run_ingest(&cfg, None).unwrap();
        run_train(&cfg, Strategy::FedAvg, Some(2)).unwrap();
        run_evaluate(&cfg, Strategy::FedAvg, None, Some(2)).unwrap();
        let path = cfg.report_dir(Strategy::FedAvg).join("BBB.json");
        let first = std::fs::read(&path).unwrap();

        run_train(&cfg, Strategy::FedAvg, Some(1)).unwrap();
        run_evaluate(&cfg, Strategy::FedAvg, None, Some(1)).unwrap();
        assert_eq!(first, std::fs::read(&path).unwrap());
    }
}

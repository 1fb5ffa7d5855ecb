//! `fedseries`: ingest OHLCV snapshots, train SOLO/FedAvg/FedAtt models,
//! evaluate them and export plot data.
//!
//! Exit codes: 0 success, 1 user or data error, 2 internal error (training
//! divergence, numeric faults).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use fedseries_core::error::ExperimentError;
use fedseries_core::experiment::{
    run_evaluate, run_export_plot, run_ingest, run_train, ExperimentConfig,
};
use fedseries_core::federation::Strategy;
use fedseries_core::model::load_checkpoint;

#[derive(Parser)]
#[command(name = "fedseries", version, about)]
struct Cli {
    /// Cap concurrent workers (0 or omitted: library default).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Override the config seed; also read from FEDSERIES_SEED.
    #[arg(long, global = true, env = "FEDSERIES_SEED")]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse per-symbol CSVs into windowed dataset artifacts.
    Ingest {
        #[arg(long)]
        config: PathBuf,
    },
    /// Train the configured symbols under one strategy.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// solo, fedavg or fedatt.
        #[arg(long)]
        strategy: Strategy,
    },
    /// Evaluate checkpoints and refresh the comparison table.
    Evaluate {
        #[arg(long)]
        config: PathBuf,
        /// Strategy to evaluate; omitted: every strategy with a checkpoint.
        #[arg(long)]
        strategy: Option<Strategy>,
        /// Explicit checkpoint directory instead of the default layout.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Export a report's predicted/actual series as a plot CSV.
    ExportPlot {
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn load_config(path: &Path, seed: Option<u64>) -> Result<ExperimentConfig, ExperimentError> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn dispatch(cli: Cli) -> Result<ExitCode, ExperimentError> {
    match cli.command {
        Command::Ingest { config } => {
            let cfg = load_config(&config, cli.seed)?;
            let outcomes = run_ingest(&cfg, cli.workers)?;
            let mut failures = 0;
            for o in &outcomes {
                match (&o.split_counts, &o.error) {
                    (Some([train, val, test]), None) => println!(
                        "ingested {}: {train}/{val}/{test} windows, {} rejected rows",
                        o.symbol, o.rejected_rows
                    ),
                    (_, Some(error)) => {
                        failures += 1;
                        eprintln!("failed {}: {error}", o.symbol);
                    }
                    _ => unreachable!("outcome is either counted or failed"),
                }
            }
            Ok(if failures == 0 { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::Train { config, strategy } => {
            let cfg = load_config(&config, cli.seed)?;
            let summary = run_train(&cfg, strategy, cli.workers)?;
            for path in &summary.checkpoints {
                println!("checkpoint: {}", path.display());
            }
            println!("trace: {}", summary.trace_path.display());
            let shown: Vec<String> = summary
                .final_val_losses
                .iter()
                .map(|l| l.map_or_else(|| "n/a".into(), |v| format!("{v:.6e}")))
                .collect();
            println!("final validation loss per client: {}", shown.join(", "));
            Ok(ExitCode::SUCCESS)
        }
        Command::Evaluate { config, strategy, checkpoint } => {
            let cfg = load_config(&config, cli.seed)?;
            let strategies = match (strategy, &checkpoint) {
                (Some(s), _) => vec![s],
                (None, Some(dir)) => vec![strategy_of_checkpoint(dir)?],
                (None, None) => {
                    let present: Vec<Strategy> = Strategy::ALL
                        .into_iter()
                        .filter(|s| cfg.checkpoint_dir(*s).exists())
                        .collect();
                    if present.is_empty() {
                        return Err(ExperimentError::Config(
                            "no checkpoints found; run train first or pass --checkpoint".into(),
                        ));
                    }
                    present
                }
            };
            for s in strategies {
                let reports = run_evaluate(&cfg, s, checkpoint.as_deref(), cli.workers)?;
                for r in &reports {
                    println!(
                        "{} {}: test mse {:.6e}, mae {:.6e}, mape {:.4}%",
                        s.name(),
                        r.symbol,
                        r.test.mse,
                        r.test.mae,
                        r.test.mape
                    );
                }
            }
            println!("comparison table: {}", cfg.comparison_path().display());
            Ok(ExitCode::SUCCESS)
        }
        Command::ExportPlot { report, out } => {
            let path = run_export_plot(&report, &out)?;
            println!("plot data: {}", path.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}

/// A checkpoint's provenance starts with the strategy that produced it.
fn strategy_of_checkpoint(dir: &Path) -> Result<Strategy, ExperimentError> {
    let (_, manifest) = load_checkpoint(dir)?;
    manifest
        .provenance
        .split_whitespace()
        .next()
        .and_then(|word| word.parse().ok())
        .ok_or_else(|| {
            ExperimentError::Config(format!(
                "cannot infer strategy from checkpoint {}; pass --strategy",
                dir.display()
            ))
        })
}

//! End-to-end tests of the `fedseries` binary: lifecycle, exit codes, seed
//! override and worker-count independence.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fedseries_core::synth::{noisy_sine_series, to_csv_string, SineSpec};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fedseries"))
}

fn run(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = bin();
    cmd.args(args).env_remove("FEDSERIES_SEED");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn assert_code(out: &Output, expected: i32) {
    assert_eq!(
        out.status.code(),
        Some(expected),
        "stdout:\n{}\nstderr:\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

/// Sandbox with two symbol CSVs and a tiny-model experiment config.
struct Sandbox {
    _dir: tempfile::TempDir,
    config: PathBuf,
    out_dir: PathBuf,
}

fn sandbox() -> Sandbox {
    let dir = tempfile::tempdir().unwrap();
    let data_dir = dir.path().join("data");
    std::fs::create_dir_all(&data_dir).unwrap();
    for (i, symbol) in ["AAA", "BBB"].iter().enumerate() {
        let spec = SineSpec {
            symbol: (*symbol).into(),
            n: 70,
            seed: 40 + i as u64,
            ..SineSpec::default()
        };
        std::fs::write(
            data_dir.join(format!("{symbol}.csv")),
            to_csv_string(&noisy_sine_series(&spec)),
        )
        .unwrap();
    }
    let out_dir = dir.path().join("out");
    let config = dir.path().join("exp.json");
    let json = serde_json::json!({
        "data_dir": data_dir,
        "symbols": ["AAA", "BBB"],
        "out_dir": out_dir,
        "seed": 11,
        "pipeline": { "smooth_window": 10, "seq_len": 4, "horizon": 1 },
        "model": {
            "seq_len": 4, "n_features": 5, "t2v_k": 1, "d_model": 8,
            "n_heads": 2, "d_head": 4, "n_encoders": 1, "d_ff": 32
        },
        "fed": {
            "strategy": "fedatt", "rounds": 2, "local_epochs": 1,
            "solo_epochs": 2, "batch_size": 16, "epsilon": 1.0,
            "learning_rate": 0.001, "seed": 0,
            "negate_scores": false, "reset_optimizer_each_round": false
        }
    });
    std::fs::write(&config, serde_json::to_string_pretty(&json).unwrap()).unwrap();
    Sandbox { _dir: dir, config, out_dir }
}

fn cfg(s: &Sandbox) -> &str {
    s.config.to_str().unwrap()
}

#[test]
fn help_and_usage_exit_codes() {
    assert_code(&run(&["--help"], &[]), 0);
    assert_code(&run(&["train"], &[]), 1);
    assert_code(&run(&["nonsense"], &[]), 1);
}

#[test]
fn missing_config_is_a_user_error() {
    let out = run(&["ingest", "--config", "/definitely/not/here.json"], &[]);
    assert_code(&out, 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("not/here.json"));
}

#[test]
fn lifecycle_end_to_end() {
    let s = sandbox();
    let out = run(&["ingest", "--config", cfg(&s)], &[]);
    assert_code(&out, 0);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("ingested AAA"));
    assert!(stdout.contains("ingested BBB"));

    assert_code(&run(&["train", "--config", cfg(&s), "--strategy", "fedatt"], &[]), 0);
    assert_code(&run(&["train", "--config", cfg(&s), "--strategy", "solo"], &[]), 0);
    assert!(s.out_dir.join("checkpoints/fedatt/global/params.bin").exists());
    assert!(s.out_dir.join("checkpoints/solo/AAA/params.bin").exists());
    assert!(s.out_dir.join("checkpoints/solo/BBB/params.bin").exists());

    let trace = std::fs::read_to_string(s.out_dir.join("traces/fedatt.jsonl")).unwrap();
    assert_eq!(trace.lines().count(), 2, "one record per round");

    let out = run(&["evaluate", "--config", cfg(&s)], &[]);
    assert_code(&out, 0);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("solo AAA"), "evaluates every trained strategy: {stdout}");
    assert!(stdout.contains("fedatt BBB"));

    let comparison =
        std::fs::read_to_string(s.out_dir.join("reports/comparison.csv")).unwrap();
    assert_eq!(comparison.lines().count(), 1 + 4, "2 symbols × 2 strategies");

    let report = s.out_dir.join("reports/fedatt/AAA.json");
    let plots = s.out_dir.join("plots");
    let out = run(
        &["export-plot", "--report", report.to_str().unwrap(), "--out", plots.to_str().unwrap()],
        &[],
    );
    assert_code(&out, 0);
    let plot = std::fs::read_to_string(plots.join("AAA_fedatt.csv")).unwrap();
    assert!(plot.starts_with(
        "window_index,split,actual_norm,forecast_norm,actual_return,forecast_return\n"
    ));
}

#[test]
fn one_bad_csv_fails_ingest_but_writes_the_rest() {
    let s = sandbox();
    let data_dir = s.config.parent().unwrap().join("data");
    std::fs::write(data_dir.join("CCC.csv"), "Date,Open\n2020-01-01,1\n").unwrap();
    let text = std::fs::read_to_string(&s.config).unwrap();
    std::fs::write(&s.config, text.replace("\"BBB\"", "\"BBB\", \"CCC\"")).unwrap();

    let out = run(&["ingest", "--config", cfg(&s)], &[]);
    assert_code(&out, 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("CCC"));
    assert!(s.out_dir.join("datasets/AAA/manifest.json").exists());
    assert!(s.out_dir.join("datasets/BBB/manifest.json").exists());
}

#[test]
fn divergence_is_an_internal_error() {
    let s = sandbox();
    let text = std::fs::read_to_string(&s.config).unwrap();
    std::fs::write(&s.config, text.replace("\"learning_rate\": 0.001", "\"learning_rate\": 1e80"))
        .unwrap();
    assert_code(&run(&["ingest", "--config", cfg(&s)], &[]), 0);
    let out = run(&["train", "--config", cfg(&s), "--strategy", "fedavg"], &[]);
    assert_code(&out, 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("diverged"));
}

#[test]
fn seed_env_overrides_config() {
    let s = sandbox();
    assert_code(&run(&["ingest", "--config", cfg(&s)], &[]), 0);
    let params = s.out_dir.join("checkpoints/fedavg/global/params.bin");

    assert_code(
        &run(&["train", "--config", cfg(&s), "--strategy", "fedavg"], &[("FEDSERIES_SEED", "99")]),
        0,
    );
    let seeded = std::fs::read(&params).unwrap();

    assert_code(&run(&["train", "--config", cfg(&s), "--strategy", "fedavg"], &[]), 0);
    let config_seed = std::fs::read(&params).unwrap();
    assert_ne!(seeded, config_seed, "env seed must change the run");

    assert_code(
        &run(&["train", "--config", cfg(&s), "--strategy", "fedavg"], &[("FEDSERIES_SEED", "99")]),
        0,
    );
    assert_eq!(seeded, std::fs::read(&params).unwrap(), "same env seed reproduces bytes");
}

#[test]
fn reports_are_identical_across_worker_counts() {
    let s = sandbox();
    assert_code(&run(&["ingest", "--config", cfg(&s)], &[]), 0);

    let report = s.out_dir.join("reports/fedatt/BBB.json");
    let mut bytes = Vec::new();
    for workers in ["1", "2"] {
        assert_code(
            &run(
                &["train", "--config", cfg(&s), "--strategy", "fedatt", "--workers", workers],
                &[],
            ),
            0,
        );
        assert_code(
            &run(
                &["evaluate", "--config", cfg(&s), "--strategy", "fedatt", "--workers", workers],
                &[],
            ),
            0,
        );
        bytes.push(std::fs::read(&report).unwrap());
    }
    assert_eq!(bytes[0], bytes[1], "worker count must not leak into reports");
}

#[test]
fn evaluate_with_explicit_checkpoint_infers_strategy() {
    let s = sandbox();
    assert_code(&run(&["ingest", "--config", cfg(&s)], &[]), 0);
    assert_code(&run(&["train", "--config", cfg(&s), "--strategy", "fedavg"], &[]), 0);
    let ckpt = s.out_dir.join("checkpoints/fedavg/global");
    let out = run(
        &["evaluate", "--config", cfg(&s), "--checkpoint", ckpt.to_str().unwrap()],
        &[],
    );
    assert_code(&out, 0);
    assert!(String::from_utf8_lossy(&out.stdout).contains("fedavg AAA"));
}

#[test]
fn evaluate_without_checkpoints_points_at_train() {
    let s = sandbox();
    assert_code(&run(&["ingest", "--config", cfg(&s)], &[]), 0);
    let out = run(&["evaluate", "--config", cfg(&s)], &[]);
    assert_code(&out, 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("run train first"));
}

#[test]
fn rerun_produces_identical_artifacts() {
    let s = sandbox();
    assert_code(&run(&["ingest", "--config", cfg(&s)], &[]), 0);
    let manifest = s.out_dir.join("datasets/AAA/manifest.json");
    let inputs = s.out_dir.join("datasets/AAA/inputs.bin");
    let first = (std::fs::read(&manifest).unwrap(), std::fs::read(&inputs).unwrap());
    assert_code(&run(&["ingest", "--config", cfg(&s)], &[]), 0);
    assert_eq!(first.0, std::fs::read(&manifest).unwrap());
    assert_eq!(first.1, std::fs::read(&inputs).unwrap());
}

#[test]
fn config_hash_ties_artifacts_to_settings() {
    let s = sandbox();
    assert_code(&run(&["ingest", "--config", cfg(&s)], &[]), 0);
    let text = std::fs::read_to_string(&s.config).unwrap();
    std::fs::write(&s.config, text.replace("\"smooth_window\": 10", "\"smooth_window\": 5")).unwrap();
    let out = run(&["train", "--config", cfg(&s), "--strategy", "fedavg"], &[]);
    assert_code(&out, 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("rerun ingest"));
}

#[test]
fn export_plot_missing_report_errors() {
    let s = sandbox();
    let out = run(
        &["export-plot", "--report", "/no/report.json", "--out", s.out_dir.to_str().unwrap()],
        &[],
    );
    assert_code(&out, 1);
}

/// Binary path sanity for the test harness itself.
#[test]
fn binary_exists() {
    assert!(Path::new(env!("CARGO_BIN_EXE_fedseries")).exists());
}

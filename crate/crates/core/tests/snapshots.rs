//! The CSVs under `data/snapshots/` are generated, committed fixtures. This
//! test regenerates them in memory and byte-compares against the checked-in
//! files, so any drift in the generator is caught immediately.

use std::path::PathBuf;

use fedseries_core::ingest::parse_csv;
use fedseries_core::synth::{market_series, snapshot_specs, to_csv_string};

fn snapshots_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/snapshots")
}

#[test]
fn committed_snapshots_match_generator() {
    let dir = snapshots_dir();
    for spec in snapshot_specs() {
        let path = dir.join(format!("{}.csv", spec.symbol));
        let committed = std::fs::read_to_string(&path)
            .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        let regenerated = to_csv_string(&market_series(&spec));
        assert_eq!(
            committed, regenerated,
            "{} drifted from its generator",
            spec.symbol
        );
    }
}

#[test]
fn committed_snapshots_parse_cleanly() {
    let dir = snapshots_dir();
    for spec in snapshot_specs() {
        let path = dir.join(format!("{}.csv", spec.symbol));
        let (series, issues) = parse_csv(&path).expect("snapshot parses");
        assert_eq!(series.records.len(), spec.n, "{} row count", spec.symbol);
        assert_eq!(issues.len(), 0, "{} rejected rows", spec.symbol);
    }
}

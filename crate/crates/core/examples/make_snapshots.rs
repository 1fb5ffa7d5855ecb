//! Regenerate the pinned CSV snapshots.
//!
//! Usage: cargo run -p fedseries-core --example make_snapshots [out_dir]
//!
//! The generators are pure functions of their specs, so the output is
//! byte-identical on every run; a test guards the committed files against
//! drift.

use fedseries_core::synth::{market_series, snapshot_specs, to_csv_string};

fn main() {
    let out = std::env::args().nth(1).unwrap_or_else(|| "data/snapshots".into());
    std::fs::create_dir_all(&out).expect("create snapshot directory");
    for spec in snapshot_specs() {
        let series = market_series(&spec);
        let path = std::path::Path::new(&out).join(format!("{}.csv", spec.symbol));
        std::fs::write(&path, to_csv_string(&series)).expect("write snapshot");
        println!("wrote {} ({} rows)", path.display(), series.records.len());
    }
}

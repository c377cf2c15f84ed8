//! Certification rate as a function of the flip-keep probability beta, one
//! column per structure-budget threshold.
//!
//! `cargo run --release --example sweep`

use std::path::Path;

use elegant::experiment::{run_sweep, RunConfig, SweepAxis};

fn main() -> elegant::Result<()> {
    let mut cfg =
        RunConfig::from_file(&Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/fixture.json"))?;
    cfg.out = "out/examples/sweep".into();
    cfg.sweep.axis = SweepAxis::Beta;
    cfg.test_sets.count = 40;
    let thresholds = cfg.sweep.resolved_thresholds();
    let rows = run_sweep(&cfg)?;
    println!(
        "beta   {}",
        thresholds
            .iter()
            .map(|t| format!(">={t:<5}"))
            .collect::<String>()
    );
    for row in rows {
        let cells: String = row.fcr.iter().map(|f| format!("{f:<7.2}")).collect();
        println!("{:<6} {cells}", row.value);
    }
    Ok(())
}

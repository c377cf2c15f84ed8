//! Runs the structure and attribute attacks of the default budget grid
//! against the vanilla model and reports both models' accuracy and bias.
//!
//! `cargo run --release --example attack -- [random|greedy]`

use std::path::Path;

use elegant::attack::StructureAttacker;
use elegant::experiment::{run_attack, RunConfig};

fn show(v: Option<f64>) -> String {
    v.map_or("undefined".into(), |v| format!("{v:.3}"))
}

fn main() -> elegant::Result<()> {
    let mut cfg =
        RunConfig::from_file(&Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/fixture.json"))?;
    cfg.out = "out/examples/attack".into();
    if std::env::args().nth(1).as_deref() == Some("random") {
        cfg.attack.attacker = StructureAttacker::Random;
    }
    for row in run_attack(&cfg)? {
        println!(
            "flips {:>2} l2 {:>6} {:<9} acc {} dSP {} {}{}",
            row.budget_edges,
            row.budget_l2,
            row.model,
            show(row.accuracy),
            show(row.delta_sp),
            row.outcome,
            if row.within_certified {
                " (within certified budget)"
            } else {
                ""
            }
        );
    }
    Ok(())
}

//! Writes a synthetic attributed graph in the loader's file format.
//!
//! `cargo run --example synthetic_data -- [two_block|german_like] [seed] [dir]`
//!
//! `two_block 11 crates/core/data/two_block` reproduces the bundled fixture.

use std::path::PathBuf;

use elegant::fairness::delta_sp;
use elegant::prediction::Predictions;
use elegant::synthetic::{generate, write_dataset, SyntheticConfig};

fn main() -> elegant::Result<()> {
    let mut args = std::env::args().skip(1);
    let kind = args.next().unwrap_or_else(|| "two_block".into());
    let seed: u64 = args
        .next()
        .map_or(Ok(11), |s| s.parse())
        .expect("seed is an integer");
    let dir = PathBuf::from(args.next().unwrap_or_else(|| format!("out/{kind}")));
    let cfg = match kind.as_str() {
        "two_block" => SyntheticConfig::two_block(seed),
        "german_like" => SyntheticConfig::german_like(seed),
        other => {
            return Err(elegant::Error::Config(format!(
                "unknown generator {other:?}"
            )))
        }
    };
    let ds = generate(&cfg)?;
    let files = write_dataset(&ds, &dir)?;
    let all: Vec<usize> = (0..ds.labels.len()).collect();
    let label_gap = delta_sp(&Predictions(ds.labels.y.clone()), &ds.labels.s, &all)?;
    println!(
        "{} nodes, {} edges, label parity gap {label_gap:.3}; wrote {}",
        ds.graph.num_nodes(),
        ds.graph.num_edges(),
        files.edges.parent().unwrap_or(&dir).display()
    );
    Ok(())
}

//! Trains the vanilla and noise-augmented classifiers on the bundled fixture
//! and prints their clean accuracy and group gaps on the test pool.
//!
//! `cargo run --release --example train -- [backbone: gcn|sage]`

use std::path::Path;

use elegant::experiment::{run_train, RunConfig};

fn show(v: Option<f64>) -> String {
    v.map_or("undefined".into(), |v| format!("{v:.3}"))
}

fn main() -> elegant::Result<()> {
    let mut cfg =
        RunConfig::from_file(&Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/fixture.json"))?;
    if let Some(b) = std::env::args().nth(1) {
        cfg.train.backbone = b.parse()?;
    }
    cfg.out = "out/examples/train".into();
    let r = run_train(&cfg)?;
    for (name, m) in [("vanilla", &r.vanilla), ("augmented", &r.augmented)] {
        println!(
            "{name:>9}: accuracy {}  dSP {}  dEO {}",
            show(m.accuracy),
            show(m.delta_sp),
            show(m.delta_eo)
        );
    }
    println!("weights and metrics.json in {}", cfg.out.display());
    Ok(())
}

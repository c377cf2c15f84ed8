//! Fraction of sampled test sets that certify, with the mean budgets and the
//! cost in accuracy relative to the vanilla model.
//!
//! `cargo run --release --example fcr -- [sp|eo]`

use std::path::Path;

use elegant::experiment::{run_fcr, RunConfig};

fn main() -> elegant::Result<()> {
    let mut cfg =
        RunConfig::from_file(&Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/fixture.json"))?;
    if let Some(m) = std::env::args().nth(1) {
        cfg.metric = m.parse()?;
    }
    cfg.out = "out/examples/fcr".into();
    let r = run_fcr(&cfg)?;
    for run in &r.runs {
        println!(
            "seed {}: eta {:.4}, fcr {:.2}, mean eps_A {:?}, mean eps_X {:?}",
            run.seed,
            run.eta.eta,
            run.fcr(),
            run.mean_eps_a(),
            run.mean_eps_x()
        );
    }
    println!(
        "fcr {:.3}; accuracy {:?} vs vanilla {:?}",
        r.fcr(),
        r.mean_accuracy(),
        r.vanilla_accuracy()
    );
    Ok(())
}

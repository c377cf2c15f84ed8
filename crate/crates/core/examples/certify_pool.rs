//! Certifies the whole fixture test pool once and prints the certificate:
//! the two budgets, the outer vote and the selected output's bias.
//!
//! `cargo run --release --example certify_pool`

use std::path::Path;

use elegant::experiment::{run_certify, RunConfig};

fn main() -> elegant::Result<()> {
    let mut cfg =
        RunConfig::from_file(&Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/fixture.json"))?;
    cfg.out = "out/examples/certify".into();
    let r = run_certify(&cfg)?;
    println!("outcome: {:?}", r.outcome);
    println!(
        "outer votes: {}/{}",
        r.n_outer_positive, cfg.smoothing.n_outer
    );
    if let Some(b) = r.budgets {
        println!(
            "certified budgets: {} edge flips, attribute L2 {:.4}",
            b.eps_a, b.eps_x
        );
    }
    if let Some(bias) = r.selected_bias() {
        println!("selected output bias {bias:.4}");
    }
    Ok(())
}

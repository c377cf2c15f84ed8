//! Scores a small (sigma, beta) grid by the mean certified budgets and picks
//! the pair that ranks high on both.
//!
//! `cargo run --release --example recommend_parameters`

use std::path::Path;

use elegant::experiment::{certify_test_sets, recommend_parameters, ParameterScore, RunConfig};

fn main() -> elegant::Result<()> {
    let mut cfg =
        RunConfig::from_file(&Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/fixture.json"))?;
    cfg.test_sets.count = 30;
    let mut scores = Vec::new();
    for sigma in [0.05, 0.5, 2.0] {
        for beta in [0.7, 0.8, 0.9] {
            let mut params = cfg.smoothing.clone();
            params.sigma = sigma;
            params.beta = beta;
            let run = certify_test_sets(&cfg, cfg.seed, Some(&params))?;
            let score = ParameterScore {
                sigma,
                beta,
                mean_eps_x: run.mean_eps_x().unwrap_or(0.0),
                mean_eps_a: run.mean_eps_a().unwrap_or(0.0),
            };
            println!(
                "sigma {sigma:<5} beta {beta:<4} fcr {:.2} eps_X {:.3} eps_A {:.2}",
                run.fcr(),
                score.mean_eps_x,
                score.mean_eps_a
            );
            scores.push(score);
        }
    }
    match recommend_parameters(&scores) {
        Some(best) => println!("recommended: sigma {} beta {}", best.sigma, best.beta),
        None => println!("no parameters scored"),
    }
    Ok(())
}

//! Worst-case smoothed probability after k edge flips, compared with the
//! exhaustive enumeration, and the resulting structure budgets.
//!
//! `cargo run --release --example structure_bound -- [beta]`

use elegant::certify::{
    attribute_radius, brute_force_bound_oracle, positive_prob_lower_bound, structure_budget,
};

fn main() -> elegant::Result<()> {
    let beta: f64 = std::env::args()
        .nth(1)
        .map_or(Ok(0.9), |s| s.parse())
        .expect("beta is a number");
    println!("beta {beta}");
    println!("{:>6} {:>4} {:>12} {:>12}", "p", "k", "bound", "exhaustive");
    for p in [0.6, 0.9, 0.99] {
        for k in [1, 2, 4, 8] {
            let fast = positive_prob_lower_bound(p, k, beta)?;
            let oracle = brute_force_bound_oracle(p, k, beta)?;
            println!("{p:>6} {k:>4} {fast:>12.8} {oracle:>12.8}");
        }
    }
    for p in [0.55, 0.7, 0.9, 0.99, 0.999] {
        let b = structure_budget(p, beta, 64)?;
        println!(
            "p {p:<6} -> {} edge flips, attribute radius {:.3} at sigma 0.5",
            b.flips,
            attribute_radius(p, 0.5)
        );
    }
    Ok(())
}

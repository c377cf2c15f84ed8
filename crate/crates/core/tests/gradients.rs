//! Backpropagation against central finite differences on random tiny models.

mod common;

#[test]
fn gradients_match_finite_differences() {
    for seed in 0..20 {
        let err = common::gradient_check(seed);
        assert!(err <= 1e-4, "seed {seed}: relative error {err:.3e}");
    }
}

//! Invariants checked on random inputs.

use elegant::certify::{
    attribute_radius, positive_prob_lower_bound, region_table, structure_budget,
};
use elegant::estimate::binomial_lower_bound;
use elegant::experiment::{
    recommend_parameters, thresholded_fcr, ParameterScore, SetResult, SweepAxis,
};
use elegant::fairness::delta_sp;
use elegant::prediction::Predictions;
use proptest::prelude::*;

fn set_result() -> impl Strategy<Value = SetResult> {
    (any::<bool>(), 0usize..20, 0.0f64..12.0).prop_map(|(certified, a, x)| SetResult {
        certified,
        eps_a: certified.then_some(a),
        eps_x: certified.then_some(x),
        bias: None,
        accuracy: None,
        vanilla_bias: None,
        vanilla_accuracy: None,
    })
}

proptest! {
    #[test]
    fn structure_budget_grows_with_confidence(p in 0.5f64..1.0, dp in 0.0f64..0.5, beta in 0.51f64..0.99) {
        let hi = (p + dp).min(1.0);
        prop_assert!(structure_budget(p, beta, 64).unwrap().flips <= structure_budget(hi, beta, 64).unwrap().flips);
    }

    #[test]
    fn bound_shrinks_with_more_flips(p in 0.5f64..1.0, k in 1usize..40, beta in 0.51f64..0.99) {
        let a = positive_prob_lower_bound(p, k, beta).unwrap();
        let b = positive_prob_lower_bound(p, k + 1, beta).unwrap();
        prop_assert!(b <= a + 1e-12);
        prop_assert!((0.0..=p + 1e-12).contains(&a));
    }

    #[test]
    fn region_tables_are_distributions(k in 1usize..60, beta in 0.51f64..0.999) {
        let t = region_table(k, beta).unwrap();
        let clean: f64 = t.entries.iter().map(|e| e.prob_under_clean).sum();
        let pert: f64 = t.entries.iter().map(|e| e.prob_under_perturbed).sum();
        prop_assert!((clean - 1.0).abs() < 1e-9 && (pert - 1.0).abs() < 1e-9);
    }

    #[test]
    fn radius_is_monotone_and_linear(p in 0.5f64..0.999, dp in 0.0f64..0.4, sigma in 0.01f64..10.0, c in 0.1f64..10.0) {
        prop_assert!(attribute_radius(p, sigma) <= attribute_radius((p + dp).min(0.999), sigma));
        let scaled = attribute_radius(p, c * sigma);
        prop_assert!((scaled - c * attribute_radius(p, sigma)).abs() <= 1e-9 * scaled.max(1.0));
    }

    #[test]
    fn lower_bound_is_below_point_and_monotone(k in 0u64..300, f in 0u64..300, alpha in 0.01f64..0.5) {
        let b = binomial_lower_bound(k, f, alpha).unwrap();
        prop_assert!(b.lower <= b.point + 1e-12);
        let more = binomial_lower_bound(k + 1, f, alpha).unwrap();
        prop_assert!(more.lower >= b.lower - 1e-12);
    }

    #[test]
    fn sweep_rows_never_increase(sets in proptest::collection::vec(set_result(), 1..40),
                                 mut thresholds in proptest::collection::vec(0.0f64..16.0, 1..12)) {
        thresholds.sort_by(f64::total_cmp);
        for axis in [SweepAxis::Sigma, SweepAxis::Beta] {
            let row = thresholded_fcr(&sets, axis, &thresholds);
            prop_assert!(row.windows(2).all(|w| w[1] <= w[0]));
            prop_assert!(row.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn parity_gap_is_a_probability_gap(preds in proptest::collection::vec(0u8..2, 4..40), seed in any::<u64>()) {
        let n = preds.len();
        let s: Vec<u8> = (0..n).map(|i| ((seed >> (i % 64)) & 1) as u8).collect();
        let nodes: Vec<usize> = (0..n).collect();
        if let Ok(gap) = delta_sp(&Predictions(preds), &s, &nodes) {
            prop_assert!((0.0..=1.0).contains(&gap));
        }
    }

    #[test]
    fn recommended_pair_is_a_candidate(raw in proptest::collection::vec((0.0f64..5.0, 0.0f64..10.0), 1..12)) {
        let scores: Vec<ParameterScore> = raw
            .iter()
            .enumerate()
            .map(|(i, &(x, a))| ParameterScore { sigma: i as f64, beta: 0.9, mean_eps_x: x, mean_eps_a: a })
            .collect();
        let best = recommend_parameters(&scores).unwrap();
        prop_assert!(scores.contains(&best));
    }
}

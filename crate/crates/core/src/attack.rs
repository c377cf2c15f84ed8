//! Evasion attacks on vulnerable nodes and the under-attack evaluation loop.
//!
//! The structure attackers are stand-ins for a dedicated fairness attack and
//! are labelled as substitutes in every output.

use std::fmt;

use log::warn;
use ndarray::{Array2, Axis};
use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fairness::{accuracy, bias, delta_eo, delta_sp, BiasMetric};
use crate::gnn::{GcnModel, NodeClassifier, Propagation};
use crate::graph::{AttributeMatrix, Graph, NodeLabels, Pair, SplitSpec};
use crate::pipeline::{certify_and_predict, CertificationReport, Outcome};
use crate::rng::{self, Domain};
use crate::smoothing::{for_each_eligible_pair, SmoothingConfig};

/// Perturbation budget: unordered edge flips and the ℓ2 norm of the attribute change.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackBudget {
    pub edge_flips: usize,
    pub attr_l2: f64,
}

impl AttackBudget {
    pub fn new(edge_flips: usize, attr_l2: f64) -> Result<Self> {
        if !(attr_l2 >= 0.0 && attr_l2.is_finite()) {
            return Err(Error::Config(format!(
                "attribute budget must be ≥ 0, got {attr_l2}"
            )));
        }
        Ok(AttackBudget {
            edge_flips,
            attr_l2,
        })
    }

    /// The four budget pairs `(2^i, 10^(i−1))`, `i = 0..4`.
    pub fn default_grid() -> Vec<AttackBudget> {
        (0..4)
            .map(|i| AttackBudget {
                edge_flips: 1 << i,
                attr_l2: 10f64.powi(i - 1),
            })
            .collect()
    }
}

/// Which structure attacker to run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StructureAttacker {
    Random,
    #[default]
    Greedy,
}

impl fmt::Display for StructureAttacker {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StructureAttacker::Random => "SUBSTITUTE-random",
            StructureAttacker::Greedy => "SUBSTITUTE-greedy",
        })
    }
}

/// `∂L/∂logits` of the soft bias surrogate: the gap between group means of
/// the class-1 softmax probability, signed so that ascent widens it.
fn soft_bias_gradient(
    logits: &Array2<f64>,
    labels: &NodeLabels,
    nodes: &[usize],
    metric: BiasMetric,
) -> Array2<f64> {
    let eligible: Vec<usize> = nodes
        .iter()
        .copied()
        .filter(|&i| metric == BiasMetric::StatisticalParity || labels.y[i] == 1)
        .collect();
    let prob = |i: usize| {
        let row = logits.row(i);
        1.0 / (1.0 + (row[0] - row[1]).exp())
    };
    let mut count = [0usize; 2];
    let mut mean = [0.0; 2];
    for &i in &eligible {
        let g = labels.s[i] as usize;
        count[g] += 1;
        mean[g] += prob(i);
    }
    let mut grad = Array2::zeros(logits.dim());
    if count[0] == 0 || count[1] == 0 {
        return grad;
    }
    let sign = if mean[0] / count[0] as f64 >= mean[1] / count[1] as f64 {
        1.0
    } else {
        -1.0
    };
    for &i in &eligible {
        let g = labels.s[i] as usize;
        let p = prob(i);
        let w = sign * if g == 0 { 1.0 } else { -1.0 } / count[g] as f64 * p * (1.0 - p);
        grad[[i, 1]] += w;
        grad[[i, 0]] -= w;
    }
    grad
}

/// Gradient-ascent attribute attack on vulnerable rows.
///
/// The perturbation follows the input gradient of the soft bias surrogate on
/// `nodes`, restricted to the `top_frac` share of vulnerable entries with the
/// largest gradient magnitude, and is rescaled to ℓ2 norm `budget_l2`.
#[allow(clippy::too_many_arguments)]
pub fn attribute_attack(
    model: &GcnModel,
    g: &Graph,
    x: &AttributeMatrix,
    labels: &NodeLabels,
    vulnerable: &[usize],
    nodes: &[usize],
    budget_l2: f64,
    metric: BiasMetric,
    top_frac: f64,
) -> Result<AttributeMatrix> {
    if !(budget_l2 >= 0.0 && budget_l2.is_finite()) {
        return Err(Error::Config(format!(
            "attribute budget must be ≥ 0, got {budget_l2}"
        )));
    }
    if !(top_frac > 0.0 && top_frac <= 1.0) {
        return Err(Error::Config(format!(
            "top fraction must lie in (0, 1], got {top_frac}"
        )));
    }
    if budget_l2 == 0.0 || vulnerable.is_empty() {
        return Ok(x.clone());
    }
    let prop = Propagation::new(model.backbone, g);
    let cache = model.forward_cached(&prop, &x.0.view(), None)?;
    let dlogits = soft_bias_gradient(&cache.logits, labels, nodes, metric);
    let grads = model.backward(&prop, &x.0.view(), &cache, &dlogits);
    let d = x.dim();
    let mut entries: Vec<(usize, usize, f64)> = vulnerable
        .iter()
        .flat_map(|&v| (0..d).map(move |j| (v, j)))
        .map(|(v, j)| (v, j, grads.x[[v, j]]))
        .filter(|e| e.2 != 0.0)
        .collect();
    if entries.is_empty() {
        warn!(
            "attribute attack: zero gradient on every vulnerable entry; attributes left unchanged"
        );
        return Ok(x.clone());
    }
    let keep = ((top_frac * (vulnerable.len() * d) as f64).ceil() as usize).max(1);
    entries.sort_by(|a, b| {
        b.2.abs()
            .total_cmp(&a.2.abs())
            .then((a.0, a.1).cmp(&(b.0, b.1)))
    });
    entries.truncate(keep);
    let norm = entries.iter().map(|e| e.2 * e.2).sum::<f64>().sqrt();
    let mut out = x.0.clone();
    for (v, j, gv) in entries {
        out[[v, j]] += budget_l2 * gv / norm;
    }
    Ok(AttributeMatrix(out))
}

fn eligible_pairs(n: usize, vulnerable: &[usize]) -> Vec<Pair> {
    let mut pairs = Vec::new();
    for_each_eligible_pair(n, vulnerable, |p| pairs.push(p));
    pairs
}

/// Flips `budget` distinct eligible pairs chosen uniformly at random.
pub fn structure_attack_random(
    g: &Graph,
    vulnerable: &[usize],
    budget: usize,
    seed: u64,
) -> Result<Graph> {
    if budget == 0 {
        return Ok(g.clone());
    }
    let pairs = eligible_pairs(g.num_nodes(), vulnerable);
    if budget > pairs.len() {
        return Err(Error::Config(format!(
            "{budget} flips requested but only {} eligible pairs exist",
            pairs.len()
        )));
    }
    let mut rng = rng::substream(seed, Domain::Attack, 0);
    let mut flips: Vec<Pair> = index::sample(&mut rng, pairs.len(), budget)
        .into_iter()
        .map(|i| pairs[i])
        .collect();
    flips.sort_unstable();
    Ok(g.symmetric_difference(&flips))
}

/// Hard bias with undefined values read as 0.
fn hard_bias(
    preds: &crate::prediction::Predictions,
    labels: &NodeLabels,
    nodes: &[usize],
    metric: BiasMetric,
) -> f64 {
    bias(metric, preds, labels, nodes).unwrap_or(0.0)
}

/// Greedy bias-maximizing flips: each step scores a random pool of eligible
/// pairs by the hard bias after flipping and commits the best one.
#[allow(clippy::too_many_arguments)]
pub fn structure_attack_greedy<C: NodeClassifier + ?Sized>(
    model: &C,
    g: &Graph,
    x: &AttributeMatrix,
    labels: &NodeLabels,
    vulnerable: &[usize],
    nodes: &[usize],
    budget: usize,
    metric: BiasMetric,
    pool_size: usize,
    seed: u64,
) -> Result<Graph> {
    let pairs = eligible_pairs(g.num_nodes(), vulnerable);
    if budget > pairs.len() {
        return Err(Error::Config(format!(
            "{budget} flips requested but only {} eligible pairs exist",
            pairs.len()
        )));
    }
    let mut current = g.clone();
    let mut committed: Vec<usize> = Vec::new();
    for step in 0..budget {
        let mut rng = rng::substream(seed, Domain::Attack, 1 + step as u64);
        let available = pairs.len() - committed.len();
        let draw = pool_size.min(available);
        let mut best: Option<(f64, usize)> = None;
        for k in index::sample(&mut rng, available, draw) {
            // map the k-th uncommitted pair back to its index
            let mut idx = k;
            for &c in committed.iter() {
                if c <= idx {
                    idx += 1;
                }
            }
            let trial = current.symmetric_difference(&[pairs[idx]]);
            let b = hard_bias(&model.predict(&trial, x), labels, nodes, metric);
            if best.is_none_or(|(bb, bi)| b > bb || (b == bb && idx < bi)) {
                best = Some((b, idx));
            }
        }
        let (_, idx) = best.expect("at least one candidate pair");
        current = current.symmetric_difference(&[pairs[idx]]);
        committed.push(idx);
        committed.sort_unstable();
    }
    Ok(current)
}

/// Random attribute perturbation on vulnerable rows with ℓ2 norm exactly `l2`.
pub fn random_attribute_perturbation(
    x: &AttributeMatrix,
    vulnerable: &[usize],
    l2: f64,
    seed: u64,
) -> AttributeMatrix {
    if l2 == 0.0 || vulnerable.is_empty() {
        return x.clone();
    }
    let mut rng = rng::substream(seed, Domain::Attack, u64::MAX);
    let dir = Array2::from_shape_simple_fn((vulnerable.len(), x.dim()), || {
        rng.sample::<f64, _>(StandardNormal)
    });
    let norm = dir.mapv(|v| v * v).sum().sqrt();
    let mut out = x.0.clone();
    for (r, &v) in vulnerable.iter().enumerate() {
        out.row_mut(v)
            .scaled_add(l2 / norm, &dir.index_axis(Axis(0), r));
    }
    AttributeMatrix(out)
}

/// One output row of the attack table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackRow {
    pub budget_edges: usize,
    pub budget_l2: f64,
    pub model: String,
    pub accuracy: Option<f64>,
    pub delta_sp: Option<f64>,
    pub delta_eo: Option<f64>,
    pub outcome: String,
    pub within_certified: bool,
    pub structure_attacker: String,
}

/// Settings of the under-attack evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    pub attacker: StructureAttacker,
    pub top_frac: f64,
    pub candidate_pool: usize,
    pub seed: u64,
}

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig {
            attacker: StructureAttacker::Greedy,
            top_frac: 0.01,
            candidate_pool: 256,
            seed: 0,
        }
    }
}

/// Perturbed inputs for one budget: structure first, then attributes.
#[allow(clippy::too_many_arguments)]
pub fn perturb(
    model: &GcnModel,
    g: &Graph,
    x: &AttributeMatrix,
    labels: &NodeLabels,
    split: &SplitSpec,
    budget: AttackBudget,
    metric: BiasMetric,
    cfg: &AttackConfig,
) -> Result<(Graph, AttributeMatrix)> {
    let nodes = &split.test_pool;
    let g2 = match cfg.attacker {
        StructureAttacker::Random => {
            structure_attack_random(g, &split.vulnerable, budget.edge_flips, cfg.seed)?
        }
        StructureAttacker::Greedy => structure_attack_greedy(
            model,
            g,
            x,
            labels,
            &split.vulnerable,
            nodes,
            budget.edge_flips,
            metric,
            cfg.candidate_pool,
            cfg.seed,
        )?,
    };
    let x2 = attribute_attack(
        model,
        &g2,
        x,
        labels,
        &split.vulnerable,
        nodes,
        budget.attr_l2,
        metric,
        cfg.top_frac,
    )?;
    Ok((g2, x2))
}

fn metrics_row(
    preds: &crate::prediction::Predictions,
    labels: &NodeLabels,
    nodes: &[usize],
) -> (Option<f64>, Option<f64>, Option<f64>) {
    (
        accuracy(preds, &labels.y, nodes).ok(),
        delta_sp(preds, &labels.s, nodes).ok(),
        delta_eo(preds, &labels.y, &labels.s, nodes).ok(),
    )
}

/// Evaluates the vanilla model and the certified pipeline under each budget.
///
/// Attacks are computed against `vanilla`; both models then see the same
/// perturbed graph and attributes. `clean` is the certification on clean
/// data whose budgets decide `within_certified`.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_under_attack(
    vanilla: &GcnModel,
    certified: &GcnModel,
    g: &Graph,
    x: &AttributeMatrix,
    labels: &NodeLabels,
    split: &SplitSpec,
    grid: &[AttackBudget],
    smoothing: &SmoothingConfig,
    clean: &CertificationReport,
    cfg: &AttackConfig,
) -> Result<Vec<AttackRow>> {
    if grid.is_empty() {
        return Err(Error::Config("attack grid is empty".into()));
    }
    let nodes = &split.test_pool;
    let mut rows = Vec::with_capacity(2 * grid.len());
    for &budget in grid {
        let (g2, x2) = perturb(vanilla, g, x, labels, split, budget, smoothing.metric, cfg)?;
        let within = clean
            .budgets
            .is_some_and(|b| budget.edge_flips <= b.eps_a && budget.attr_l2 <= b.eps_x);
        let (acc, sp, eo) = metrics_row(&vanilla.try_predict(&g2, &x2)?, labels, nodes);
        rows.push(AttackRow {
            budget_edges: budget.edge_flips,
            budget_l2: budget.attr_l2,
            model: "vanilla".into(),
            accuracy: acc,
            delta_sp: sp,
            delta_eo: eo,
            outcome: "NA".into(),
            within_certified: within,
            structure_attacker: cfg.attacker.to_string(),
        });
        let report = certify_and_predict(certified, &g2, &x2, labels, split, nodes, smoothing)?;
        let (acc, sp, eo) = match report.selected.as_ref().and_then(|s| s.prediction.as_ref()) {
            Some(p) => metrics_row(p, labels, nodes),
            None => (None, None, None),
        };
        rows.push(AttackRow {
            budget_edges: budget.edge_flips,
            budget_l2: budget.attr_l2,
            model: "certified".into(),
            accuracy: acc,
            delta_sp: sp,
            delta_eo: eo,
            outcome: match report.outcome {
                Outcome::Certified => "CERTIFIED".into(),
                Outcome::Abstain => "ABSTAIN".into(),
            },
            within_certified: within,
            structure_attacker: cfg.attacker.to_string(),
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gnn::{Activation, Backbone};
    use crate::synthetic::{generate, SyntheticConfig};
    use ndarray::array;

    fn setup(seed: u64) -> (Graph, AttributeMatrix, NodeLabels, SplitSpec, GcnModel) {
        let ds = generate(&SyntheticConfig::two_block(seed)).unwrap();
        let x = crate::graph::normalize_attributes(&ds.attributes);
        let split = crate::graph::make_splits(200, seed, 0.5, 0.25, 0.05).unwrap();
        let cfg = crate::gnn::TrainConfig {
            epochs: 60,
            hidden: 16,
            seed,
            ..Default::default()
        };
        let model = crate::gnn::train(&ds.graph, &x, &ds.labels, &split, &cfg)
            .unwrap()
            .model;
        (ds.graph, x, ds.labels, split, model)
    }

    #[test]
    fn default_grid_values() {
        let grid = AttackBudget::default_grid();
        let pairs: Vec<(usize, f64)> = grid.iter().map(|b| (b.edge_flips, b.attr_l2)).collect();
        assert_eq!(pairs, vec![(1, 0.1), (2, 1.0), (4, 10.0), (8, 100.0)]);
        assert!(AttackBudget::new(1, -1.0).is_err());
    }

    #[test]
    fn attribute_attack_contract() {
        let (g, x, labels, split, model) = setup(1);
        let unchanged = attribute_attack(
            &model,
            &g,
            &x,
            &labels,
            &split.vulnerable,
            &split.test_pool,
            0.0,
            BiasMetric::StatisticalParity,
            0.01,
        )
        .unwrap();
        assert_eq!(unchanged, x);
        for budget in [0.1, 1.0, 10.0] {
            let out = attribute_attack(
                &model,
                &g,
                &x,
                &labels,
                &split.vulnerable,
                &split.test_pool,
                budget,
                BiasMetric::StatisticalParity,
                0.05,
            )
            .unwrap();
            let diff = &out.0 - &x.0;
            let norm = diff.mapv(|v| v * v).sum().sqrt();
            assert!(
                (norm - budget).abs() < 1e-9 * budget.max(1.0),
                "{norm} vs {budget}"
            );
            for i in 0..200 {
                if !split.vulnerable.contains(&i) {
                    assert!(diff.row(i).iter().all(|&v| v == 0.0));
                }
            }
        }
    }

    #[test]
    fn attribute_attack_targets_the_controlling_entry() {
        // Two isolated nodes. Only attribute 1 reaches the logits, through a
        // weight that favours class 1, so raising it on node 0 (group 0)
        // widens the parity gap and is the single top-ranked entry.
        let g = Graph::empty(2);
        let x = AttributeMatrix(array![[0.5, 0.5], [0.5, 0.5]]);
        let model = GcnModel {
            backbone: Backbone::Gcn,
            activation: Activation::Identity,
            w1: array![[0.0], [1.0]],
            b1: array![0.0],
            w2: array![[-1.0, 1.0]],
            b2: array![0.0, 0.0],
            w1_self: None,
            w2_self: None,
        };
        let labels = NodeLabels::new(vec![1, 0], vec![0, 1]).unwrap();
        let out = attribute_attack(
            &model,
            &g,
            &x,
            &labels,
            &[0],
            &[0, 1],
            0.3,
            BiasMetric::StatisticalParity,
            0.5,
        )
        .unwrap();
        assert!((out.0[[0, 1]] - 0.8).abs() < 1e-12);
        assert_eq!(out.0[[0, 0]], 0.5);
        assert_eq!(out.0.row(1), x.0.row(1));
    }

    #[test]
    fn random_structure_attack_contract() {
        let g = Graph::from_pairs(6, vec![(0, 1), (2, 3)]).unwrap();
        assert_eq!(structure_attack_random(&g, &[1, 4], 0, 3).unwrap(), g);
        for budget in [1, 3, 9] {
            let out = structure_attack_random(&g, &[1, 4], budget, 3).unwrap();
            let changed: Vec<_> = crate::graph::symmetric_closure(&out)
                .symmetric_difference(&crate::graph::symmetric_closure(&g))
                .copied()
                .filter(|(u, v)| u < v)
                .collect();
            assert_eq!(changed.len(), budget);
            assert!(changed
                .iter()
                .all(|&(u, v)| [1, 4].contains(&u) || [1, 4].contains(&v)));
        }
        assert!(structure_attack_random(&g, &[1, 4], 10, 3).is_err());
    }

    #[test]
    fn greedy_beats_random_in_most_trials() {
        let (g, x, labels, split, model) = setup(2);
        let mut wins = 0;
        for trial in 0..20u64 {
            let budget = 3;
            let greedy = structure_attack_greedy(
                &model,
                &g,
                &x,
                &labels,
                &split.vulnerable,
                &split.test_pool,
                budget,
                BiasMetric::StatisticalParity,
                64,
                trial,
            )
            .unwrap();
            let random = structure_attack_random(&g, &split.vulnerable, budget, trial).unwrap();
            let bg = hard_bias(
                &model.predict(&greedy, &x),
                &labels,
                &split.test_pool,
                BiasMetric::StatisticalParity,
            );
            let br = hard_bias(
                &model.predict(&random, &x),
                &labels,
                &split.test_pool,
                BiasMetric::StatisticalParity,
            );
            wins += (bg >= br) as usize;
            let diff = crate::graph::symmetric_closure(&greedy);
            let base = crate::graph::symmetric_closure(&g);
            for &(u, v) in diff.symmetric_difference(&base) {
                assert!(split.vulnerable.contains(&u) || split.vulnerable.contains(&v));
            }
        }
        assert!(wins >= 14, "greedy won {wins} of 20");
    }

    #[test]
    fn random_attribute_perturbation_has_exact_norm() {
        let x = AttributeMatrix(Array2::zeros((5, 3)));
        let out = random_attribute_perturbation(&x, &[1, 3], 2.5, 7);
        assert!((out.0.mapv(|v| v * v).sum().sqrt() - 2.5).abs() < 1e-12);
        assert!(out.0.row(0).iter().all(|&v| v == 0.0));
    }
}

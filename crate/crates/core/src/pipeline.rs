//! Nested Monte-Carlo certification: structure masks outside, attribute
//! noise inside, then budgets and the fairest sampled prediction.
//!
//! Predictions depend only on the noise streams, not on the test set, so they
//! are drawn once into a [`PredictionBank`] and every test set is certified
//! against the same bank.

use std::collections::HashMap;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::certify::{
    attribute_radius, joint_attribute_budget, structure_budget, CertifiedBudgets,
};
use crate::error::{Error, Result};
use crate::estimate::{binomial_lower_bound, ProbabilityBound};
use crate::fairness::{BiasMetric, BiasThreshold};
use crate::gnn::NodeClassifier;
use crate::graph::{AttributeMatrix, Graph, NodeLabels, SplitSpec};
use crate::prediction::Predictions;
use crate::smoothing::{
    apply_structure_mask, domain_size, sample_attribute_noise, sample_structure_mask,
    DimensionConvention, SmoothingConfig,
};

/// Inner-noise stream of draw `inner` under structure sample `outer`.
pub fn inner_stream_id(outer: usize, inner: usize, n_inner: usize) -> u64 {
    (outer * n_inner + inner) as u64
}

/// Predictions of every `(outer, inner)` draw, restricted to a node pool.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionBank {
    pool: Vec<usize>,
    position: HashMap<usize, usize>,
    n_outer: usize,
    n_inner: usize,
    /// `[outer][inner][pool position]`, flattened.
    classes: Vec<u8>,
}

impl PredictionBank {
    pub fn pool(&self) -> &[usize] {
        &self.pool
    }

    pub fn n_outer(&self) -> usize {
        self.n_outer
    }

    pub fn n_inner(&self) -> usize {
        self.n_inner
    }

    /// Classes of the pool nodes for one draw, in pool order.
    pub fn draw(&self, outer: usize, inner: usize) -> &[u8] {
        let width = self.pool.len();
        let start = (outer * self.n_inner + inner) * width;
        &self.classes[start..start + width]
    }

    /// Pool positions of `nodes`, or an error naming the first node outside the pool.
    pub fn positions(&self, nodes: &[usize]) -> Result<Vec<usize>> {
        nodes
            .iter()
            .map(|v| {
                self.position
                    .get(v)
                    .copied()
                    .ok_or_else(|| Error::Data(format!("node {v} is not in the prediction pool")))
            })
            .collect()
    }
}

fn check_subset(inner: &[usize], outer: &[usize], what: &str) -> Result<()> {
    let outer: std::collections::HashSet<_> = outer.iter().collect();
    match inner.iter().find(|v| !outer.contains(v)) {
        Some(v) => Err(Error::Data(format!(
            "{what}: node {v} is outside the test pool"
        ))),
        None => Ok(()),
    }
}

/// Draws `N1 × N2` noisy predictions of `pool` nodes. Runs on the current
/// rayon pool; the result does not depend on the number of workers.
pub fn sample_predictions<C: NodeClassifier + ?Sized>(
    model: &C,
    g: &Graph,
    x: &AttributeMatrix,
    vulnerable: &[usize],
    pool: &[usize],
    cfg: &SmoothingConfig,
) -> Result<PredictionBank> {
    cfg.validate()?;
    if x.num_nodes() != g.num_nodes() {
        return Err(Error::Shape(
            "attribute rows and graph disagree on node count".into(),
        ));
    }
    if let Some(&v) = vulnerable.iter().chain(pool).find(|&&v| v >= g.num_nodes()) {
        return Err(Error::Data(format!("node {v} out of range")));
    }
    let d = x.dim();
    let per_outer: Vec<Vec<u8>> = (0..cfg.n_outer)
        .into_par_iter()
        .map(|outer| -> Result<Vec<u8>> {
            let mask = sample_structure_mask(cfg, g, vulnerable, outer as u64)?;
            let perturbed = apply_structure_mask(g, &mask);
            let prepared = model.prepare(&perturbed, x)?;
            let noises = (0..cfg.n_inner)
                .map(|inner| {
                    sample_attribute_noise(
                        cfg,
                        vulnerable,
                        d,
                        inner_stream_id(outer, inner, cfg.n_inner),
                    )
                })
                .collect::<Result<Vec<_>>>()?;
            prepared.predict_noisy_batch(&noises, pool)
        })
        .collect::<Result<_>>()?;
    Ok(PredictionBank {
        pool: pool.to_vec(),
        position: pool.iter().enumerate().map(|(i, &v)| (v, i)).collect(),
        n_outer: cfg.n_outer,
        n_inner: cfg.n_inner,
        classes: per_outer.concat(),
    })
}

/// Full prediction of one draw, recomputed from its streams.
pub fn regenerate_prediction<C: NodeClassifier + ?Sized>(
    model: &C,
    g: &Graph,
    x: &AttributeMatrix,
    vulnerable: &[usize],
    cfg: &SmoothingConfig,
    outer: usize,
    inner: usize,
) -> Result<Predictions> {
    let mask = sample_structure_mask(cfg, g, vulnerable, outer as u64)?;
    let perturbed = apply_structure_mask(g, &mask);
    let noise = sample_attribute_noise(
        cfg,
        vulnerable,
        x.dim(),
        inner_stream_id(outer, inner, cfg.n_inner),
    )?;
    model.prepare(&perturbed, x)?.predict_noisy(&noise)
}

/// Test-set view used to score bank draws: pool position, label and group.
struct Scorer {
    rows: Vec<(usize, u8, u8)>,
    metric: BiasMetric,
}

impl Scorer {
    fn new(
        bank: &PredictionBank,
        labels: &NodeLabels,
        test_set: &[usize],
        metric: BiasMetric,
    ) -> Result<Self> {
        let positions = bank.positions(test_set)?;
        Ok(Scorer {
            rows: test_set
                .iter()
                .zip(positions)
                .map(|(&v, p)| (p, labels.y[v], labels.s[v]))
                .collect(),
            metric,
        })
    }

    /// `None` when the metric is undefined on this set.
    fn bias(&self, classes: &[u8]) -> Option<f64> {
        let mut pos = [0usize; 2];
        let mut total = [0usize; 2];
        for &(p, y, s) in &self.rows {
            if self.metric == BiasMetric::EqualOpportunity && y != 1 {
                continue;
            }
            let g = s as usize;
            total[g] += 1;
            pos[g] += (classes[p] == 1) as usize;
        }
        if total[0] == 0 || total[1] == 0 {
            return None;
        }
        Some((pos[0] as f64 / total[0] as f64 - pos[1] as f64 / total[1] as f64).abs())
    }

    fn accuracy(&self, classes: &[u8]) -> Option<f64> {
        if self.rows.is_empty() {
            return None;
        }
        let hits = self
            .rows
            .iter()
            .filter(|&&(p, y, _)| classes[p] == y)
            .count();
        Some(hits as f64 / self.rows.len() as f64)
    }
}

/// How one structure sample voted.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OuterVote {
    /// The attribute-smoothed indicator certifies 1.
    Positive,
    /// The attribute-smoothed indicator certifies 0.
    Negative,
    /// Neither class is certified at the requested confidence.
    Undecidable,
}

/// Evidence gathered under one structure sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OuterSampleRecord {
    pub stream_id: usize,
    /// Inner draws with indicator 1.
    pub n1: u64,
    pub n0: u64,
    /// Lower confidence bound on the probability of indicator 1.
    pub lower: f64,
    pub vote: OuterVote,
    /// Present iff `vote` is `Positive`.
    pub attribute_radius: Option<f64>,
    /// Least-biased inner draw with indicator 1: `(inner index, bias)`.
    pub candidate: Option<(usize, f64)>,
}

impl OuterSampleRecord {
    pub fn inner_certified(&self) -> bool {
        self.vote == OuterVote::Positive
    }
}

fn score_outer(
    bank: &PredictionBank,
    scorer: &Scorer,
    outer: usize,
    eta: &BiasThreshold,
    sigma: f64,
    alpha: f64,
) -> Result<(OuterSampleRecord, u64)> {
    let mut n1 = 0u64;
    let mut undefined = 0u64;
    let mut candidate: Option<(usize, f64)> = None;
    for inner in 0..bank.n_inner {
        match scorer.bias(bank.draw(outer, inner)) {
            Some(b) if eta.admits(b) => {
                n1 += 1;
                if candidate.is_none_or(|(_, best)| b < best) {
                    candidate = Some((inner, b));
                }
            }
            Some(_) => {}
            None => undefined += 1,
        }
    }
    let n0 = bank.n_inner as u64 - n1;
    let pos = binomial_lower_bound(n1, n0, alpha)?;
    let vote = if n1 > n0 && pos.lower > 0.5 {
        OuterVote::Positive
    } else if n0 > n1 && binomial_lower_bound(n0, n1, alpha)?.lower > 0.5 {
        OuterVote::Negative
    } else {
        OuterVote::Undecidable
    };
    let positive = vote == OuterVote::Positive;
    Ok((
        OuterSampleRecord {
            stream_id: outer,
            n1,
            n0,
            lower: pos.lower,
            vote,
            attribute_radius: positive.then(|| attribute_radius(pos.lower, sigma)),
            candidate: if positive { candidate } else { None },
        },
        undefined,
    ))
}

/// Per-structure-sample records of one test set.
pub fn score_test_set(
    bank: &PredictionBank,
    labels: &NodeLabels,
    test_set: &[usize],
    cfg: &SmoothingConfig,
) -> Result<Vec<OuterSampleRecord>> {
    let scorer = Scorer::new(bank, labels, test_set, cfg.metric)?;
    let mut undefined = 0;
    let mut records = Vec::with_capacity(bank.n_outer);
    for outer in 0..bank.n_outer {
        let (rec, u) = score_outer(bank, &scorer, outer, &cfg.eta, cfg.sigma, cfg.alpha)?;
        undefined += u;
        records.push(rec);
    }
    if undefined > 0 {
        warn!(
            "{undefined} draws had an undefined {} and counted as indicator 0",
            cfg.metric
        );
    }
    Ok(records)
}

/// The fairest candidate among inner-certified records: `(stream_id, inner, bias)`.
/// Ties go to the lowest stream id.
pub fn select_fair_output(records: &[OuterSampleRecord]) -> Option<(usize, usize, f64)> {
    records
        .iter()
        .filter(|r| r.inner_certified())
        .filter_map(|r| r.candidate.map(|(inner, b)| (r.stream_id, inner, b)))
        .min_by(|a, b| a.2.total_cmp(&b.2).then(a.0.cmp(&b.0)))
}

/// Probability that the returned prediction exceeds η: `0.5^n`.
pub fn prop1_bound(n_certified_outer: usize) -> f64 {
    0.5f64.powf(n_certified_outer as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Outcome {
    Certified,
    Abstain,
}

/// Units and conventions every report declares.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Conventions {
    pub dimension_convention: DimensionConvention,
    /// Bernoulli coordinates under the declared convention.
    pub dimension: usize,
    pub structure_budget_unit: String,
    pub attribute_budget_unit: String,
    pub beta_bound: String,
}

impl Conventions {
    pub fn new(n: usize, n_vulnerable: usize, convention: DimensionConvention) -> Self {
        Conventions {
            dimension_convention: convention,
            dimension: domain_size(n, n_vulnerable, convention),
            structure_budget_unit: "unordered node-pair flips incident to vulnerable nodes".into(),
            attribute_budget_unit: "l2 norm over vulnerable rows of min-max normalized attributes"
                .into(),
            beta_bound: "dimension-free region table; exact rational re-check within 1e-9 of 0.5"
                .into(),
        }
    }
}

/// Selected output of a certified run.
#[derive(Clone, Debug, PartialEq)]
pub struct SelectedOutput {
    pub stream_id: usize,
    pub inner: usize,
    pub bias: f64,
    /// Accuracy of the selected prediction on the test set.
    pub accuracy: Option<f64>,
    /// Full prediction, when it was regenerated.
    pub prediction: Option<Predictions>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CertificationReport {
    pub outcome: Outcome,
    pub budgets: Option<CertifiedBudgets>,
    pub selected: Option<SelectedOutput>,
    pub outer_bound: ProbabilityBound,
    pub n_outer_positive: usize,
    pub n_outer_negative: usize,
    pub n_outer_undecidable: usize,
    pub prop1_bound: f64,
    pub abstain_reason: Option<String>,
    pub config: SmoothingConfig,
    pub conventions: Conventions,
    pub records: Vec<OuterSampleRecord>,
}

/// Rounds to nine significant digits for stable serialization.
pub fn sig9(v: f64) -> Value {
    if !v.is_finite() {
        return Value::Null;
    }
    let rounded: f64 = format!("{v:.8e}").parse().expect("formatted float parses");
    json!(rounded)
}

impl CertificationReport {
    pub fn is_certified(&self) -> bool {
        self.outcome == Outcome::Certified
    }

    pub fn selected_bias(&self) -> Option<f64> {
        self.selected.as_ref().map(|s| s.bias)
    }

    /// Stable JSON view.
    pub fn to_json(&self) -> Value {
        json!({
            "outcome": self.outcome,
            "eps_A": self.budgets.map(|b| b.eps_a),
            "eps_X": self.budgets.map_or(Value::Null, |b| sig9(b.eps_x)),
            "eta": sig9(self.config.eta.eta),
            "metric": self.config.metric,
            "bias": self.selected.as_ref().map_or(Value::Null, |s| sig9(s.bias)),
            "accuracy": self.selected.as_ref().and_then(|s| s.accuracy).map_or(Value::Null, sig9),
            "n_outer_positive": self.n_outer_positive,
            "prop1_bound": sig9(self.prop1_bound),
            "config": config_json(&self.config),
            "conventions": self.conventions,
        })
    }
}

/// Smoothing configuration with floats rounded like every other report value.
pub fn config_json(cfg: &SmoothingConfig) -> Value {
    json!({
        "sigma": sig9(cfg.sigma),
        "beta": sig9(cfg.beta),
        "n_outer": cfg.n_outer,
        "n_inner": cfg.n_inner,
        "alpha": sig9(cfg.alpha),
        "eta": sig9(cfg.eta.eta),
        "eta_provenance": cfg.eta.provenance,
        "metric": cfg.metric,
        "master_seed": cfg.master_seed,
        "k_max": cfg.k_max,
        "dimension": cfg.dimension,
        "tolerant": cfg.tolerant,
    })
}

/// Outer-level decision from per-structure-sample records.
pub fn aggregate(
    records: Vec<OuterSampleRecord>,
    cfg: &SmoothingConfig,
    conventions: Conventions,
) -> Result<CertificationReport> {
    let count = |vote| records.iter().filter(|r| r.vote == vote).count();
    let (pos, neg, undecidable) = (
        count(OuterVote::Positive),
        count(OuterVote::Negative),
        count(OuterVote::Undecidable),
    );
    let n = records.len() as u64;
    let outer_bound = binomial_lower_bound(pos as u64, n - pos as u64, cfg.alpha)?;
    let mut report = CertificationReport {
        outcome: Outcome::Abstain,
        budgets: None,
        selected: None,
        outer_bound,
        n_outer_positive: pos,
        n_outer_negative: neg,
        n_outer_undecidable: undecidable,
        prop1_bound: prop1_bound(pos),
        abstain_reason: None,
        config: cfg.clone(),
        conventions,
        records,
    };
    if undecidable > 0 && !cfg.tolerant {
        report.abstain_reason = Some(format!("{undecidable} structure samples were undecidable"));
        return Ok(report);
    }
    if outer_bound.lower <= 0.5 {
        report.abstain_reason = Some(format!(
            "outer lower bound {:.4} does not exceed 0.5",
            outer_bound.lower
        ));
        return Ok(report);
    }
    let radii: Vec<f64> = report
        .records
        .iter()
        .filter_map(|r| r.attribute_radius)
        .collect();
    let eps_a = structure_budget(outer_bound.lower, cfg.beta, cfg.k_max)?.flips;
    let (Some(eps_x), Some((stream_id, inner, bias))) = (
        joint_attribute_budget(&radii),
        select_fair_output(&report.records),
    ) else {
        report.abstain_reason = Some("no inner-certified structure sample".into());
        return Ok(report);
    };
    report.outcome = Outcome::Certified;
    report.budgets = Some(CertifiedBudgets { eps_a, eps_x });
    report.selected = Some(SelectedOutput {
        stream_id,
        inner,
        bias,
        accuracy: None,
        prediction: None,
    });
    Ok(report)
}

/// Certifies one test set against a bank of draws.
pub fn certify_with_bank(
    bank: &PredictionBank,
    labels: &NodeLabels,
    test_set: &[usize],
    n_nodes: usize,
    n_vulnerable: usize,
    cfg: &SmoothingConfig,
) -> Result<CertificationReport> {
    if bank.n_outer != cfg.n_outer || bank.n_inner != cfg.n_inner {
        return Err(Error::Config(
            "prediction bank was drawn with different sample counts".into(),
        ));
    }
    let records = score_test_set(bank, labels, test_set, cfg)?;
    let mut report = aggregate(
        records,
        cfg,
        Conventions::new(n_nodes, n_vulnerable, cfg.dimension),
    )?;
    if let Some(sel) = report.selected.as_mut() {
        let scorer = Scorer::new(bank, labels, test_set, cfg.metric)?;
        sel.accuracy = scorer.accuracy(bank.draw(sel.stream_id, sel.inner));
    }
    Ok(report)
}

/// Certifies `test_set` and returns the selected fair prediction.
///
/// Noise is placed on `split.vulnerable`, which must lie in the test pool;
/// bias is measured on `test_set`.
pub fn certify_and_predict<C: NodeClassifier + ?Sized>(
    model: &C,
    g: &Graph,
    x: &AttributeMatrix,
    labels: &NodeLabels,
    split: &SplitSpec,
    test_set: &[usize],
    cfg: &SmoothingConfig,
) -> Result<CertificationReport> {
    check_subset(test_set, &split.test_pool, "test set")?;
    check_subset(&split.vulnerable, &split.test_pool, "vulnerable set")?;
    let bank = sample_predictions(model, g, x, &split.vulnerable, test_set, cfg)?;
    let mut report = certify_with_bank(
        &bank,
        labels,
        test_set,
        g.num_nodes(),
        split.vulnerable.len(),
        cfg,
    )?;
    if let Some(sel) = report.selected.as_mut() {
        sel.prediction = Some(regenerate_prediction(
            model,
            g,
            x,
            &split.vulnerable,
            cfg,
            sel.stream_id,
            sel.inner,
        )?);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fairness::bias;
    use crate::gnn::{Activation, Backbone, GcnModel};
    use crate::rng::{substream, Domain};
    use ndarray::Array2;
    use rand::Rng;

    struct Constant(u8);

    impl NodeClassifier for Constant {
        fn predict(&self, g: &Graph, _x: &AttributeMatrix) -> Predictions {
            Predictions(vec![self.0; g.num_nodes()])
        }
    }

    fn fixture() -> (Graph, AttributeMatrix, NodeLabels, SplitSpec) {
        let n = 40;
        let mut rng = substream(5, Domain::Synthetic, 0);
        let mut edges = Vec::new();
        for u in 0..n {
            for v in u + 1..n {
                if rng.random::<f64>() < 0.1 {
                    edges.push((u, v));
                }
            }
        }
        let g = Graph::from_edges(n, edges).unwrap().0;
        let x = AttributeMatrix(Array2::from_shape_simple_fn((n, 3), || rng.random::<f64>()));
        let y = (0..n).map(|i| (i % 3 == 0) as u8).collect();
        let s = (0..n).map(|i| (i % 2) as u8).collect();
        let split = SplitSpec {
            train: (0..20).collect(),
            validation: (20..28).collect(),
            test_pool: (28..40).collect(),
            vulnerable: vec![30, 31, 35],
        };
        (g, x, NodeLabels::new(y, s).unwrap(), split)
    }

    fn config(eta: f64) -> SmoothingConfig {
        let mut c = SmoothingConfig::new(BiasThreshold::absolute(eta).unwrap());
        c.n_outer = 40;
        c.n_inner = 30;
        c
    }

    #[test]
    fn constant_predictor_certifies_with_closed_form_bound() {
        let (g, x, labels, split) = fixture();
        let cfg = config(0.1);
        let test: Vec<usize> = split.test_pool.clone();
        let r = certify_and_predict(&Constant(0), &g, &x, &labels, &split, &test, &cfg).unwrap();
        assert!(r.is_certified());
        let expected = cfg.alpha.powf(1.0 / cfg.n_outer as f64);
        assert!((r.outer_bound.lower - expected).abs() < 1e-10);
        let budgets = r.budgets.unwrap();
        assert_eq!(
            budgets.eps_a,
            structure_budget(expected, cfg.beta, cfg.k_max)
                .unwrap()
                .flips
        );
        assert_eq!(r.selected_bias(), Some(0.0));
        assert_eq!(r.prop1_bound, prop1_bound(cfg.n_outer));
        assert_eq!(
            r.selected.unwrap().prediction.unwrap(),
            Predictions(vec![0; 40])
        );
    }

    #[test]
    fn zero_eta_abstains() {
        let (g, x, labels, split) = fixture();
        let r = certify_and_predict(
            &Constant(0),
            &g,
            &x,
            &labels,
            &split,
            &split.test_pool,
            &config(0.0),
        )
        .unwrap();
        assert_eq!(r.outcome, Outcome::Abstain);
        assert!(r.budgets.is_none());
        assert_eq!(r.to_json()["eps_A"], Value::Null);
    }

    #[test]
    fn selection_examples() {
        let rec = |id, b: f64| OuterSampleRecord {
            stream_id: id,
            n1: 10,
            n0: 0,
            lower: 0.9,
            vote: OuterVote::Positive,
            attribute_radius: Some(1.0),
            candidate: Some((0, b)),
        };
        let recs = vec![rec(0, 0.12), rec(1, 0.03), rec(2, 0.08)];
        assert_eq!(select_fair_output(&recs).unwrap().0, 1);
        assert_eq!(select_fair_output(&recs[..1]).unwrap().0, 0);
        assert_eq!(
            select_fair_output(&[rec(4, 0.05), rec(2, 0.05)]).unwrap().0,
            2
        );
        assert!(select_fair_output(&[]).is_none());
    }

    #[test]
    fn prop1_examples() {
        assert_eq!(prop1_bound(0), 1.0);
        assert_eq!(prop1_bound(1), 0.5);
        assert_eq!(prop1_bound(10), 0.0009765625);
    }

    #[test]
    fn vulnerable_outside_pool_is_rejected() {
        let (g, x, labels, mut split) = fixture();
        split.vulnerable.push(3);
        assert!(matches!(
            certify_and_predict(
                &Constant(0),
                &g,
                &x,
                &labels,
                &split,
                &split.test_pool.clone(),
                &config(0.1)
            ),
            Err(Error::Data(_))
        ));
    }

    fn trained_like() -> GcnModel {
        let mut rng = substream(2, Domain::Training, 0);
        GcnModel::init(Backbone::Gcn, Activation::Relu, 3, 8, 2, &mut rng)
    }

    #[test]
    fn report_is_independent_of_worker_count() {
        let (g, x, labels, split) = fixture();
        let model = trained_like();
        let mut cfg = config(0.5);
        cfg.tolerant = true;
        let run = |jobs| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(jobs)
                .build()
                .unwrap()
                .install(|| {
                    certify_and_predict(&model, &g, &x, &labels, &split, &split.test_pool, &cfg)
                        .unwrap()
                })
        };
        let a = run(1);
        let b = run(3);
        assert_eq!(a, b);
        assert_eq!(a.to_json().to_string(), b.to_json().to_string());
    }

    #[test]
    fn selected_prediction_matches_bank_and_bias() {
        let (g, x, labels, split) = fixture();
        let model = trained_like();
        let mut cfg = config(0.6);
        cfg.tolerant = true;
        let r =
            certify_and_predict(&model, &g, &x, &labels, &split, &split.test_pool, &cfg).unwrap();
        if let Some(sel) = &r.selected {
            let pred = sel.prediction.as_ref().unwrap();
            let b = bias(cfg.metric, pred, &labels, &split.test_pool).unwrap();
            assert_eq!(b, sel.bias);
            assert!(b < cfg.eta.eta);
        }
    }

    #[test]
    fn subset_replay_never_grows_eps_x() {
        let (g, x, labels, split) = fixture();
        let model = trained_like();
        let mut cfg = config(0.6);
        cfg.tolerant = true;
        let bank =
            sample_predictions(&model, &g, &x, &split.vulnerable, &split.test_pool, &cfg).unwrap();
        let records = score_test_set(&bank, &labels, &split.test_pool, &cfg).unwrap();
        let conv = || Conventions::new(40, 3, cfg.dimension);
        let full = aggregate(records.clone(), &cfg, conv()).unwrap();
        let radii = |rs: &[OuterSampleRecord]| {
            joint_attribute_budget(
                &rs.iter()
                    .filter_map(|r| r.attribute_radius)
                    .collect::<Vec<_>>(),
            )
        };
        for keep in [5, 17, 39] {
            let subset: Vec<_> = records.iter().take(keep).cloned().collect();
            if let (Some(all), Some(part)) = (radii(&records), radii(&subset)) {
                assert!(all <= part);
            }
        }
        // the outer bound depends only on the vote counts, not on N2
        let mut rescaled = records.clone();
        for r in &mut rescaled {
            r.n1 *= 3;
            r.n0 *= 3;
        }
        let again = aggregate(rescaled, &cfg, conv()).unwrap();
        assert_eq!(again.outer_bound, full.outer_bound);
    }
}

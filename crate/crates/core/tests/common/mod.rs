//! Helpers shared by the integration tests and the acceptance suite.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use elegant::attack::{random_attribute_perturbation, structure_attack_random};
use elegant::experiment::{
    load_workspace, resolve_eta, train_models, DatasetSource, EtaSpec, RunConfig, SmoothingParams,
    SplitConfig, TestSetConfig,
};
use elegant::gnn::{Activation, Backbone, GcnModel, Propagation};
use elegant::graph::{AttributeMatrix, Graph};
use elegant::pipeline::certify_and_predict;
use elegant::rng::{substream, Domain};
use ndarray::Array2;
use rand::Rng;
use rayon::prelude::*;

pub fn manifest_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

/// The bundled fixture with a test pool large enough for stable bias estimates.
pub fn fixture_config(out: &Path) -> RunConfig {
    RunConfig::from_file(&manifest_dir().join("configs/fixture.json"))
        .map(|mut c| {
            c.out = out.to_path_buf();
            c
        })
        .expect("bundled fixture config parses")
}

/// German-Credit-scale synthetic runs over three seeds.
pub fn german_like_config(out: &Path) -> RunConfig {
    RunConfig {
        dataset: DatasetSource::GermanLike { seed: None },
        split: SplitConfig::default(),
        fcr_seeds: vec![0, 1, 2],
        eta: Some(EtaSpec::Relative(1.25)),
        out: out.to_path_buf(),
        ..Default::default()
    }
}

/// Fixture config with reduced sample and test-set counts.
pub fn quick_config(out: &Path) -> RunConfig {
    let mut cfg = fixture_config(out);
    cfg.smoothing = SmoothingParams {
        n_outer: 60,
        n_inner: 40,
        ..cfg.smoothing
    };
    cfg.test_sets = TestSetConfig {
        ratio: 0.9,
        count: 20,
    };
    cfg
}

fn random_instance(seed: u64) -> (GcnModel, Graph, AttributeMatrix, Vec<u8>) {
    let mut rng = substream(seed, Domain::Synthetic, 77);
    let n = rng.random_range(3..8);
    let d = rng.random_range(1..5);
    let hidden = rng.random_range(1..5);
    let backbone = if seed % 2 == 0 {
        Backbone::Gcn
    } else {
        Backbone::Sage
    };
    let activation = if seed % 5 == 4 {
        Activation::Identity
    } else {
        Activation::Relu
    };
    let mut model = GcnModel::init(backbone, activation, d, hidden, 2, &mut rng);
    // nonzero biases so that the bias gradients are exercised
    model.b1.mapv_inplace(|_| rng.random_range(-0.5..0.5));
    model.b2.mapv_inplace(|_| rng.random_range(-0.5..0.5));
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.random::<f64>() < 0.5 {
                edges.push((u as u32, v as u32));
            }
        }
    }
    let g = Graph::from_pairs(n, edges).expect("valid toy graph");
    let x = AttributeMatrix(Array2::from_shape_simple_fn((n, d), || {
        rng.random_range(-1.0..1.0)
    }));
    let y = (0..n).map(|_| rng.random_range(0..2u8)).collect();
    (model, g, x, y)
}

fn param_slices(m: &mut GcnModel) -> Vec<&mut [f64]> {
    let mut out: Vec<&mut [f64]> = vec![
        m.w1.as_slice_mut().expect("standard layout"),
        m.b1.as_slice_mut().expect("standard layout"),
        m.w2.as_slice_mut().expect("standard layout"),
        m.b2.as_slice_mut().expect("standard layout"),
    ];
    for w in [&mut m.w1_self, &mut m.w2_self].into_iter().flatten() {
        out.push(w.as_slice_mut().expect("standard layout"));
    }
    out
}

/// Relative error with an absolute floor so that vanishing entries compare
/// on an absolute scale.
fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Largest relative error between analytic and central-difference gradients
/// (parameters and input) over one random tiny instance.
pub fn gradient_check(seed: u64) -> f64 {
    let (model, g, x, y) = random_instance(seed);
    let prop = Propagation::new(model.backbone, &g);
    let nodes: Vec<usize> = (0..g.num_nodes()).collect();
    let (_, grads) = model
        .gradients(&prop, &x, &y, &nodes)
        .expect("shapes agree");
    let loss = |m: &GcnModel, x: &AttributeMatrix| {
        m.gradients(&prop, x, &y, &nodes).expect("shapes agree").0
    };
    let h = 1e-6;
    let mut analytic: Vec<Vec<f64>> = vec![
        grads.w1.iter().copied().collect(),
        grads.b1.to_vec(),
        grads.w2.iter().copied().collect(),
        grads.b2.to_vec(),
    ];
    for w in [&grads.w1_self, &grads.w2_self].into_iter().flatten() {
        analytic.push(w.iter().copied().collect());
    }
    let mut worst: f64 = 0.0;
    let mut probe = model.clone();
    for (group, values) in analytic.iter().enumerate() {
        for (i, &a) in values.iter().enumerate() {
            let orig = param_slices(&mut probe)[group][i];
            param_slices(&mut probe)[group][i] = orig + h;
            let up = loss(&probe, &x);
            param_slices(&mut probe)[group][i] = orig - h;
            let down = loss(&probe, &x);
            param_slices(&mut probe)[group][i] = orig;
            worst = worst.max(rel_err(a, (up - down) / (2.0 * h)));
        }
    }
    let mut xp = x.clone();
    for idx in 0..xp.0.len() {
        let (r, c) = (idx / xp.0.ncols(), idx % xp.0.ncols());
        let orig = xp.0[[r, c]];
        xp.0[[r, c]] = orig + h;
        let up = loss(&model, &xp);
        xp.0[[r, c]] = orig - h;
        let down = loss(&model, &xp);
        xp.0[[r, c]] = orig;
        worst = worst.max(rel_err(grads.x[[r, c]], (up - down) / (2.0 * h)));
    }
    worst
}

#[derive(Clone, Debug, Default)]
pub struct SoundnessSummary {
    pub certified_runs: usize,
    pub perturbations: usize,
    /// Perturbed runs whose selected output has bias at or above η.
    pub violations: usize,
    /// Perturbed runs that still certified.
    pub recertified: usize,
    /// Perturbed runs whose outer vote lost its strict majority.
    pub majority_lost: usize,
}

/// Certifies the fixture pool for each seed and, for every certified run,
/// re-runs the pipeline on `per_run` random perturbations that use the full
/// certified budgets, under the same master seed.
pub fn soundness(cfg: &RunConfig, seeds: &[u64], per_run: usize) -> SoundnessSummary {
    let mut summary = SoundnessSummary::default();
    for &seed in seeds {
        let ws = load_workspace(cfg, seed).expect("fixture loads");
        let models = train_models(cfg, &ws, seed).expect("training succeeds");
        let d = &ws.dataset;
        let vanilla = models
            .vanilla
            .try_predict(&d.graph, &ws.x)
            .expect("shapes agree");
        let eta = resolve_eta(
            cfg.eta.unwrap_or(EtaSpec::Relative(1.25)),
            &vanilla,
            &ws,
            cfg.metric,
        )
        .expect("eta");
        let scfg = cfg.smoothing_config(eta, seed);
        let pool = &ws.split.test_pool;
        let clean = certify_and_predict(
            &models.augmented,
            &d.graph,
            &ws.x,
            &d.labels,
            &ws.split,
            pool,
            &scfg,
        )
        .expect("certification runs");
        let Some(budgets) = clean.budgets.filter(|_| clean.is_certified()) else {
            continue;
        };
        summary.certified_runs += 1;
        let outcomes: Vec<(bool, bool, bool)> = (0..per_run as u64)
            .into_par_iter()
            .map(|j| {
                let stream = seed * 1_000_003 + j;
                let g2 =
                    structure_attack_random(&d.graph, &ws.split.vulnerable, budgets.eps_a, stream)
                        .expect("budget fits the eligible pairs");
                let x2 = random_attribute_perturbation(
                    &ws.x,
                    &ws.split.vulnerable,
                    budgets.eps_x,
                    stream,
                );
                let r = certify_and_predict(
                    &models.augmented,
                    &g2,
                    &x2,
                    &d.labels,
                    &ws.split,
                    pool,
                    &scfg,
                )
                .expect("certification runs");
                let violated = r.selected_bias().is_some_and(|b| b >= eta.eta);
                (
                    violated,
                    r.is_certified(),
                    2 * r.n_outer_positive <= scfg.n_outer,
                )
            })
            .collect();
        summary.perturbations += outcomes.len();
        summary.violations += outcomes.iter().filter(|o| o.0).count();
        summary.recertified += outcomes.iter().filter(|o| o.1).count();
        summary.majority_lost += outcomes.iter().filter(|o| o.2).count();
    }
    summary
}

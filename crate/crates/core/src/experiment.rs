//! Run configuration and the end-to-end commands behind the CLI: training,
//! single certification, certification rate over sampled test sets,
//! parameter sweeps and the attack grid.
//!
//! Every command is a pure function of its [`RunConfig`]; reports round
//! floats to nine significant digits so reruns are byte-identical.

use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::attack::{
    evaluate_under_attack, AttackBudget, AttackConfig, AttackRow, StructureAttacker,
};
use crate::error::{Error, Result};
use crate::fairness::{accuracy, bias, delta_eo, delta_sp, BiasMetric, BiasThreshold};
use crate::gnn::{load_model, save_model, train, Backbone, GcnModel, TrainConfig};
use crate::graph::{
    load_dataset, make_splits, normalize_attributes, sample_test_sets, AttributeMatrix, Dataset,
    SplitSpec,
};
use crate::pipeline::{
    certify_and_predict, certify_with_bank, sample_predictions, sig9, CertificationReport,
    Conventions,
};
use crate::prediction::Predictions;
use crate::smoothing::{DimensionConvention, SmoothingConfig};
use crate::synthetic::{generate, SyntheticConfig};

/// Seed of the bundled two-block fixture; `data/two_block` holds the same draw.
pub const FIXTURE_SEED: u64 = 11;

pub const MODEL_FILE: &str = "model.bin";
pub const VANILLA_MODEL_FILE: &str = "model_vanilla.bin";
pub const METRICS_FILE: &str = "metrics.json";
pub const CERTIFICATE_FILE: &str = "certificate.json";
pub const FCR_FILE: &str = "fcr.json";
pub const SWEEP_FILE: &str = "sweep.csv";
pub const ATTACK_FILE: &str = "attack.csv";

/// Where the graph comes from.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSource {
    /// The bundled 200-node two-block graph.
    #[default]
    Fixture,
    /// A fresh German-Credit-scale synthetic draw; `seed` defaults to the run seed.
    GermanLike {
        #[serde(default)]
        seed: Option<u64>,
    },
    Files {
        edges: PathBuf,
        attributes: PathBuf,
        labels: PathBuf,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub train_frac: f64,
    pub val_frac: f64,
    /// Share of all nodes that is vulnerable; drawn from the test pool.
    pub vul_frac: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            train_frac: 0.4,
            val_frac: 0.55,
            vul_frac: 0.05,
        }
    }
}

/// Smoothing parameters that are not derived from the run (η, seed, metric).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmoothingParams {
    pub sigma: f64,
    pub beta: f64,
    pub n_outer: usize,
    pub n_inner: usize,
    pub alpha: f64,
    pub k_max: usize,
    pub dimension: DimensionConvention,
    pub tolerant: bool,
}

impl Default for SmoothingParams {
    fn default() -> Self {
        let base = SmoothingConfig::new(BiasThreshold::absolute(0.0).expect("zero is a valid eta"));
        SmoothingParams {
            sigma: base.sigma,
            beta: base.beta,
            n_outer: base.n_outer,
            n_inner: base.n_inner,
            alpha: base.alpha,
            k_max: base.k_max,
            dimension: base.dimension,
            tolerant: base.tolerant,
        }
    }
}

/// Threshold specification; relative values multiply the vanilla bias.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EtaSpec {
    Absolute(f64),
    Relative(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TestSetConfig {
    pub ratio: f64,
    pub count: usize,
}

impl Default for TestSetConfig {
    fn default() -> Self {
        TestSetConfig {
            ratio: 0.9,
            count: 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackSection {
    pub grid: Vec<AttackBudget>,
    pub attacker: StructureAttacker,
    /// Share of vulnerable attribute entries the attribute attack may touch.
    pub top_frac: f64,
    pub candidate_pool: usize,
}

impl Default for AttackSection {
    fn default() -> Self {
        let base = AttackConfig::default();
        AttackSection {
            grid: AttackBudget::default_grid(),
            attacker: base.attacker,
            top_frac: base.top_frac,
            candidate_pool: base.candidate_pool,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    #[default]
    Sigma,
    Beta,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub axis: SweepAxis,
    /// Parameter values; empty selects the axis default grid.
    pub values: Vec<f64>,
    /// Budget thresholds; empty selects the axis default grid.
    pub thresholds: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            axis: SweepAxis::Sigma,
            values: Vec::new(),
            thresholds: Vec::new(),
        }
    }
}

impl SweepConfig {
    pub fn resolved_values(&self) -> Vec<f64> {
        if !self.values.is_empty() {
            return self.values.clone();
        }
        match self.axis {
            SweepAxis::Sigma => vec![5e-3, 5e-2, 5e-1, 5e0],
            SweepAxis::Beta => vec![0.6, 0.7, 0.8, 0.9],
        }
    }

    pub fn resolved_thresholds(&self) -> Vec<f64> {
        if !self.thresholds.is_empty() {
            return self.thresholds.clone();
        }
        match self.axis {
            SweepAxis::Sigma => (0..=10).map(f64::from).collect(),
            SweepAxis::Beta => vec![0.0, 1.0, 2.0, 4.0, 8.0, 16.0],
        }
    }
}

/// Complete configuration of a run. Missing fields take their defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetSource,
    pub split: SplitConfig,
    pub seed: u64,
    /// Independent runs averaged by `fcr`; empty means `[seed]`.
    pub fcr_seeds: Vec<u64>,
    pub train: TrainConfig,
    pub smoothing: SmoothingParams,
    pub metric: BiasMetric,
    /// `None` selects the command default: relative 1.25, or 1.5 for `attack`.
    pub eta: Option<EtaSpec>,
    pub test_sets: TestSetConfig,
    pub attack: AttackSection,
    pub sweep: SweepConfig,
    /// Pre-trained weights for the certified base model; trained on demand otherwise.
    pub model: Option<PathBuf>,
    /// Worker cap; `None` uses every core.
    pub jobs: Option<usize>,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dataset: DatasetSource::Fixture,
            split: SplitConfig::default(),
            seed: 0,
            fcr_seeds: Vec::new(),
            train: TrainConfig::default(),
            smoothing: SmoothingParams::default(),
            metric: BiasMetric::StatisticalParity,
            eta: None,
            test_sets: TestSetConfig::default(),
            attack: AttackSection::default(),
            sweep: SweepConfig::default(),
            model: None,
            jobs: None,
            out: PathBuf::from("out"),
        }
    }
}

/// Command-line values that take precedence over the config file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub out: Option<PathBuf>,
    pub backbone: Option<Backbone>,
    pub metric: Option<BiasMetric>,
    pub eta: Option<EtaSpec>,
}

impl RunConfig {
    /// Reads a JSON config; unknown fields are rejected.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Applies flag values; a flag seed replaces any multi-seed list.
    pub fn apply(&mut self, o: &Overrides) {
        if let Some(seed) = o.seed {
            self.seed = seed;
            self.fcr_seeds.clear();
        }
        if let Some(jobs) = o.jobs {
            self.jobs = Some(jobs);
        }
        if let Some(out) = &o.out {
            self.out = out.clone();
        }
        if let Some(b) = o.backbone {
            self.train.backbone = b;
        }
        if let Some(m) = o.metric {
            self.metric = m;
        }
        if let Some(e) = o.eta {
            self.eta = Some(e);
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if let Some(EtaSpec::Absolute(v) | EtaSpec::Relative(v)) = self.eta {
            if v.is_nan() || v < 0.0 {
                return Err(Error::Config(format!("eta must be ≥ 0, got {v}")));
            }
        }
        if self.jobs == Some(0) {
            return Err(Error::Config("jobs must be at least 1".into()));
        }
        if !(self.test_sets.ratio > 0.0 && self.test_sets.ratio <= 1.0) || self.test_sets.count == 0
        {
            return Err(Error::Config(
                "test sets need a ratio in (0, 1] and a positive count".into(),
            ));
        }
        self.smoothing_config(BiasThreshold::absolute(0.0)?, self.seed)
            .validate()
    }

    pub fn seeds(&self) -> Vec<u64> {
        if self.fcr_seeds.is_empty() {
            vec![self.seed]
        } else {
            self.fcr_seeds.clone()
        }
    }

    pub fn smoothing_config(&self, eta: BiasThreshold, seed: u64) -> SmoothingConfig {
        let p = &self.smoothing;
        SmoothingConfig {
            sigma: p.sigma,
            beta: p.beta,
            n_outer: p.n_outer,
            n_inner: p.n_inner,
            alpha: p.alpha,
            eta,
            metric: self.metric,
            master_seed: seed,
            k_max: p.k_max,
            dimension: p.dimension,
            tolerant: p.tolerant,
        }
    }

    /// The resolved config with floats rounded like the rest of a report.
    /// Worker count and output directory never change results and are left out.
    pub fn to_json(&self) -> Value {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Value::Object(map) = &mut v {
            map.remove("jobs");
            map.remove("out");
        }
        round_floats(v)
    }
}

fn round_floats(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => sig9(n.as_f64().expect("f64 number")),
        Value::Array(items) => Value::Array(items.into_iter().map(round_floats).collect()),
        Value::Object(map) => {
            Value::Object(map.into_iter().map(|(k, v)| (k, round_floats(v))).collect())
        }
        other => other,
    }
}

fn opt9(v: Option<f64>) -> Value {
    v.map_or(Value::Null, sig9)
}

/// CSV cell for an optional float, rounded like JSON reports.
fn cell(v: Option<f64>) -> String {
    match v.map(sig9) {
        Some(Value::Number(n)) => n.to_string(),
        _ => String::new(),
    }
}

/// Data, normalized attributes and split of one run.
#[derive(Clone, Debug)]
pub struct Workspace {
    pub dataset: Dataset,
    pub x: AttributeMatrix,
    pub split: SplitSpec,
}

pub fn load_source(source: &DatasetSource, seed: u64) -> Result<Dataset> {
    match source {
        DatasetSource::Fixture => generate(&SyntheticConfig::two_block(FIXTURE_SEED)),
        DatasetSource::GermanLike { seed: s } => {
            generate(&SyntheticConfig::german_like(s.unwrap_or(seed)))
        }
        DatasetSource::Files {
            edges,
            attributes,
            labels,
        } => load_dataset(edges, attributes, labels),
    }
}

pub fn load_workspace(cfg: &RunConfig, seed: u64) -> Result<Workspace> {
    let dataset = load_source(&cfg.dataset, seed)?;
    if dataset.warnings.total() > 0 {
        info!(
            "dropped {} self loops and {} duplicate edges",
            dataset.warnings.self_loops, dataset.warnings.duplicate_edges
        );
    }
    let x = normalize_attributes(&dataset.attributes);
    let s = &cfg.split;
    let split = make_splits(
        dataset.graph.num_nodes(),
        seed,
        s.train_frac,
        s.val_frac,
        s.vul_frac,
    )?;
    Ok(Workspace { dataset, x, split })
}

/// Accuracy and both bias gaps on a node set; undefined values are `None`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CleanMetrics {
    pub accuracy: Option<f64>,
    pub delta_sp: Option<f64>,
    pub delta_eo: Option<f64>,
}

impl CleanMetrics {
    pub fn of(preds: &Predictions, ws: &Workspace, nodes: &[usize]) -> Self {
        let l = &ws.dataset.labels;
        CleanMetrics {
            accuracy: accuracy(preds, &l.y, nodes).ok(),
            delta_sp: delta_sp(preds, &l.s, nodes).ok(),
            delta_eo: delta_eo(preds, &l.y, &l.s, nodes).ok(),
        }
    }

    fn to_json(self) -> Value {
        json!({
            "accuracy": opt9(self.accuracy),
            "delta_sp": opt9(self.delta_sp),
            "delta_eo": opt9(self.delta_eo),
        })
    }
}

/// The vanilla model and the noise-augmented base model of the certified pipeline.
#[derive(Clone, Debug)]
pub struct Models {
    pub vanilla: GcnModel,
    pub augmented: GcnModel,
}

pub fn train_models(cfg: &RunConfig, ws: &Workspace, seed: u64) -> Result<Models> {
    let augmented_cfg = TrainConfig {
        seed,
        ..cfg.train.clone()
    };
    let vanilla_cfg = TrainConfig {
        train_noise_flip_prob: 0.0,
        train_noise_std: 0.0,
        ..augmented_cfg.clone()
    };
    let d = &ws.dataset;
    let vanilla = train(&d.graph, &ws.x, &d.labels, &ws.split, &vanilla_cfg)?.model;
    let augmented = match &cfg.model {
        Some(path) => {
            let m = load_model(path)?;
            if m.input_dim() != ws.x.dim() {
                return Err(Error::Shape(format!(
                    "{} expects {} attributes, data has {}",
                    path.display(),
                    m.input_dim(),
                    ws.x.dim()
                )));
            }
            m
        }
        None => train(&d.graph, &ws.x, &d.labels, &ws.split, &augmented_cfg)?.model,
    };
    Ok(Models { vanilla, augmented })
}

/// Resolves η against the vanilla bias on the test pool.
pub fn resolve_eta(
    spec: EtaSpec,
    vanilla: &Predictions,
    ws: &Workspace,
    metric: BiasMetric,
) -> Result<BiasThreshold> {
    match spec {
        EtaSpec::Absolute(v) => BiasThreshold::absolute(v),
        EtaSpec::Relative(m) => {
            let b = bias(metric, vanilla, &ws.dataset.labels, &ws.split.test_pool)
                .map_err(|e| Error::Data(format!("vanilla bias for a relative eta: {e}")))?;
            BiasThreshold::relative(m, b)
        }
    }
}

fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs {
        builder = builder.num_threads(j);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(f)
}

fn write_json(dir: &Path, name: &str, value: &Value) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(name);
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

fn write_csv(dir: &Path, name: &str, header: &[String], rows: &[Vec<String>]) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(name);
    let csv_err = |e: csv::Error| Error::Data(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(&path).map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Output of [`run_train`].
#[derive(Clone, Debug)]
pub struct TrainReport {
    pub vanilla: CleanMetrics,
    pub augmented: CleanMetrics,
    pub json: Value,
}

/// Trains both models, writes their weights and clean test-pool metrics.
pub fn run_train(cfg: &RunConfig) -> Result<TrainReport> {
    cfg.validate()?;
    let ws = load_workspace(cfg, cfg.seed)?;
    let models = train_models(cfg, &ws, cfg.seed)?;
    let d = &ws.dataset;
    let pool = &ws.split.test_pool;
    let vanilla = CleanMetrics::of(&models.vanilla.try_predict(&d.graph, &ws.x)?, &ws, pool);
    let augmented = CleanMetrics::of(&models.augmented.try_predict(&d.graph, &ws.x)?, &ws, pool);
    fs::create_dir_all(&cfg.out).map_err(|e| Error::io(&cfg.out, e))?;
    save_model(&models.augmented, &cfg.out.join(MODEL_FILE))?;
    save_model(&models.vanilla, &cfg.out.join(VANILLA_MODEL_FILE))?;
    let json = json!({
        "vanilla": vanilla.to_json(),
        "augmented": augmented.to_json(),
        "test_pool_size": pool.len(),
        "config": cfg.to_json(),
    });
    write_json(&cfg.out, METRICS_FILE, &json)?;
    Ok(TrainReport {
        vanilla,
        augmented,
        json,
    })
}

/// Certifies the whole test pool once and writes the certificate.
pub fn run_certify(cfg: &RunConfig) -> Result<CertificationReport> {
    cfg.validate()?;
    let ws = load_workspace(cfg, cfg.seed)?;
    let models = train_models(cfg, &ws, cfg.seed)?;
    let d = &ws.dataset;
    let vanilla = models.vanilla.try_predict(&d.graph, &ws.x)?;
    let eta = resolve_eta(
        cfg.eta.unwrap_or(EtaSpec::Relative(1.25)),
        &vanilla,
        &ws,
        cfg.metric,
    )?;
    let scfg = cfg.smoothing_config(eta, cfg.seed);
    let report = with_jobs(cfg.jobs, || {
        certify_and_predict(
            &models.augmented,
            &d.graph,
            &ws.x,
            &d.labels,
            &ws.split,
            &ws.split.test_pool,
            &scfg,
        )
    })?;
    let mut json = report.to_json();
    json["run_config"] = cfg.to_json();
    json["selected_prediction"] = report
        .selected
        .as_ref()
        .and_then(|s| s.prediction.as_ref())
        .map_or(Value::Null, |p| json!(p.classes()));
    write_json(&cfg.out, CERTIFICATE_FILE, &json)?;
    Ok(report)
}

/// Outcome of one sampled test set.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SetResult {
    pub certified: bool,
    pub eps_a: Option<usize>,
    pub eps_x: Option<f64>,
    pub bias: Option<f64>,
    pub accuracy: Option<f64>,
    pub vanilla_bias: Option<f64>,
    pub vanilla_accuracy: Option<f64>,
}

/// All test-set results of one seed.
#[derive(Clone, Debug)]
pub struct SeedRun {
    pub seed: u64,
    pub eta: BiasThreshold,
    pub sets: Vec<SetResult>,
    pub conventions: Conventions,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (mut sum, mut count) = (0.0, 0usize);
    for v in values {
        sum += v;
        count += 1;
    }
    (count > 0).then(|| sum / count as f64)
}

/// Population standard deviation.
fn std_dev(values: &[f64]) -> Option<f64> {
    let m = mean(values.iter().copied())?;
    mean(values.iter().map(|v| (v - m) * (v - m))).map(f64::sqrt)
}

impl SeedRun {
    pub fn fcr(&self) -> f64 {
        self.sets.iter().filter(|s| s.certified).count() as f64 / self.sets.len() as f64
    }

    fn certified(&self) -> impl Iterator<Item = &SetResult> {
        self.sets.iter().filter(|s| s.certified)
    }

    pub fn mean_accuracy(&self) -> Option<f64> {
        mean(self.certified().filter_map(|s| s.accuracy))
    }

    pub fn mean_bias(&self) -> Option<f64> {
        mean(self.certified().filter_map(|s| s.bias))
    }

    pub fn mean_eps_a(&self) -> Option<f64> {
        mean(self.certified().filter_map(|s| s.eps_a.map(|v| v as f64)))
    }

    pub fn mean_eps_x(&self) -> Option<f64> {
        mean(self.certified().filter_map(|s| s.eps_x))
    }

    pub fn vanilla_accuracy(&self) -> Option<f64> {
        mean(self.sets.iter().filter_map(|s| s.vanilla_accuracy))
    }

    pub fn vanilla_bias(&self) -> Option<f64> {
        mean(self.sets.iter().filter_map(|s| s.vanilla_bias))
    }

    fn to_json(&self) -> Value {
        json!({
            "seed": self.seed,
            "eta": sig9(self.eta.eta),
            "fcr": sig9(self.fcr()),
            "mean_eps_A": opt9(self.mean_eps_a()),
            "mean_eps_X": opt9(self.mean_eps_x()),
            "mean_bias": opt9(self.mean_bias()),
            "mean_accuracy": opt9(self.mean_accuracy()),
            "vanilla_mean_bias": opt9(self.vanilla_bias()),
            "vanilla_mean_accuracy": opt9(self.vanilla_accuracy()),
        })
    }
}

/// Samples the prediction bank once and certifies every test set of `seed`.
pub fn certify_test_sets(
    cfg: &RunConfig,
    seed: u64,
    smoothing_override: Option<&SmoothingParams>,
) -> Result<SeedRun> {
    let ws = load_workspace(cfg, seed)?;
    let models = train_models(cfg, &ws, seed)?;
    let d = &ws.dataset;
    let vanilla = models.vanilla.try_predict(&d.graph, &ws.x)?;
    let eta = resolve_eta(
        cfg.eta.unwrap_or(EtaSpec::Relative(1.25)),
        &vanilla,
        &ws,
        cfg.metric,
    )?;
    let mut local = cfg.clone();
    if let Some(p) = smoothing_override {
        local.smoothing = p.clone();
    }
    let scfg = local.smoothing_config(eta, seed);
    scfg.validate()?;
    let bank = sample_predictions(
        &models.augmented,
        &d.graph,
        &ws.x,
        &ws.split.vulnerable,
        &ws.split.test_pool,
        &scfg,
    )?;
    let sets = sample_test_sets(&ws.split, cfg.test_sets.ratio, cfg.test_sets.count, seed)?;
    let n = d.graph.num_nodes();
    let n_vul = ws.split.vulnerable.len();
    let results = sets
        .par_iter()
        .map(|set| {
            let r = certify_with_bank(&bank, &d.labels, set, n, n_vul, &scfg)?;
            Ok(SetResult {
                certified: r.is_certified(),
                eps_a: r.budgets.map(|b| b.eps_a),
                eps_x: r.budgets.map(|b| b.eps_x),
                bias: r.selected_bias(),
                accuracy: r.selected.as_ref().and_then(|s| s.accuracy),
                vanilla_bias: bias(cfg.metric, &vanilla, &d.labels, set).ok(),
                vanilla_accuracy: accuracy(&vanilla, &d.labels.y, set).ok(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SeedRun {
        seed,
        eta,
        sets: results,
        conventions: Conventions::new(n, n_vul, scfg.dimension),
    })
}

/// Output of [`run_fcr`].
#[derive(Clone, Debug)]
pub struct FcrReport {
    pub runs: Vec<SeedRun>,
    pub json: Value,
}

impl FcrReport {
    /// Certification rate averaged over seeds.
    pub fn fcr(&self) -> f64 {
        mean(self.runs.iter().map(SeedRun::fcr)).unwrap_or(0.0)
    }

    fn across(&self, f: impl Fn(&SeedRun) -> Option<f64>) -> Option<f64> {
        mean(self.runs.iter().filter_map(f))
    }

    pub fn mean_accuracy(&self) -> Option<f64> {
        self.across(SeedRun::mean_accuracy)
    }

    pub fn mean_bias(&self) -> Option<f64> {
        self.across(SeedRun::mean_bias)
    }

    pub fn vanilla_accuracy(&self) -> Option<f64> {
        self.across(SeedRun::vanilla_accuracy)
    }

    pub fn vanilla_bias(&self) -> Option<f64> {
        self.across(SeedRun::vanilla_bias)
    }
}

/// Certification rate over sampled test sets, for every configured seed.
///
/// Means over budgets, bias and accuracy are taken over certified sets and
/// then averaged across seeds. Both standard deviations are reported: of
/// the per-seed rates, and of the per-set certification indicator.
pub fn run_fcr(cfg: &RunConfig) -> Result<FcrReport> {
    cfg.validate()?;
    let runs = with_jobs(cfg.jobs, || {
        cfg.seeds()
            .into_iter()
            .map(|seed| certify_test_sets(cfg, seed, None))
            .collect::<Result<Vec<_>>>()
    })?;
    let per_seed: Vec<f64> = runs.iter().map(SeedRun::fcr).collect();
    let indicators: Vec<f64> = runs
        .iter()
        .flat_map(|r| r.sets.iter().map(|s| s.certified as u8 as f64))
        .collect();
    let mut report = FcrReport {
        runs,
        json: Value::Null,
    };
    let r = &report;
    report.json = json!({
        "fcr": sig9(r.fcr()),
        "fcr_std_across_seeds": opt9(std_dev(&per_seed)),
        "fcr_std_across_test_sets": opt9(std_dev(&indicators)),
        "n_sets": indicators.len(),
        "n_certified": indicators.iter().filter(|&&v| v == 1.0).count(),
        "mean_eps_A": opt9(r.across(SeedRun::mean_eps_a)),
        "mean_eps_X": opt9(r.across(SeedRun::mean_eps_x)),
        "mean_bias": opt9(r.mean_bias()),
        "mean_accuracy": opt9(r.mean_accuracy()),
        "vanilla_mean_bias": opt9(r.vanilla_bias()),
        "vanilla_mean_accuracy": opt9(r.vanilla_accuracy()),
        "metric": cfg.metric,
        "runs": r.runs.iter().map(SeedRun::to_json).collect::<Vec<_>>(),
        "conventions": r.runs.first().map(|s| &s.conventions),
        "config": cfg.to_json(),
    });
    write_json(&cfg.out, FCR_FILE, &report.json)?;
    Ok(report)
}

/// One row of the sweep: FCR per threshold for a parameter value.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub fcr: Vec<f64>,
    pub mean_eps_a: Option<f64>,
    pub mean_eps_x: Option<f64>,
}

/// Share of sets certified with the axis budget at or above each threshold.
pub fn thresholded_fcr(sets: &[SetResult], axis: SweepAxis, thresholds: &[f64]) -> Vec<f64> {
    thresholds
        .iter()
        .map(|&t| {
            let kept = sets
                .iter()
                .filter(|s| s.certified)
                .filter(|s| match axis {
                    SweepAxis::Sigma => s.eps_x.is_some_and(|e| e >= t),
                    SweepAxis::Beta => s.eps_a.is_some_and(|e| e as f64 >= t),
                })
                .count();
            kept as f64 / sets.len() as f64
        })
        .collect()
}

/// Re-runs the certification rate along one parameter axis.
pub fn run_sweep(cfg: &RunConfig) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    let values = cfg.sweep.resolved_values();
    let thresholds = cfg.sweep.resolved_thresholds();
    if values.is_empty() || thresholds.is_empty() {
        return Err(Error::Config(
            "sweep needs parameter values and thresholds".into(),
        ));
    }
    let axis = cfg.sweep.axis;
    let rows = with_jobs(cfg.jobs, || {
        values
            .iter()
            .map(|&v| {
                let mut p = cfg.smoothing.clone();
                match axis {
                    SweepAxis::Sigma => p.sigma = v,
                    SweepAxis::Beta => p.beta = v,
                }
                let run = certify_test_sets(cfg, cfg.seed, Some(&p))?;
                Ok(SweepRow {
                    value: v,
                    fcr: thresholded_fcr(&run.sets, axis, &thresholds),
                    mean_eps_a: run.mean_eps_a(),
                    mean_eps_x: run.mean_eps_x(),
                })
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let axis_name = match axis {
        SweepAxis::Sigma => "sigma",
        SweepAxis::Beta => "beta",
    };
    let budget = match axis {
        SweepAxis::Sigma => "eps_X",
        SweepAxis::Beta => "eps_A",
    };
    let mut header = vec![axis_name.to_string()];
    header.extend(
        thresholds
            .iter()
            .map(|&t| format!("fcr_{budget}_ge_{}", cell(Some(t)))),
    );
    header.extend(["mean_eps_A".to_string(), "mean_eps_X".to_string()]);
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut line = vec![cell(Some(r.value))];
            line.extend(r.fcr.iter().map(|&f| cell(Some(f))));
            line.push(cell(r.mean_eps_a));
            line.push(cell(r.mean_eps_x));
            line
        })
        .collect();
    write_csv(&cfg.out, SWEEP_FILE, &header, &table)?;
    Ok(rows)
}

/// Averaged budgets of one `(σ, β)` pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterScore {
    pub sigma: f64,
    pub beta: f64,
    pub mean_eps_x: f64,
    pub mean_eps_a: f64,
}

/// Picks the pair balancing both budgets: rank pairs by each budget in
/// descending order and return the first pair present in both truncated
/// rankings. Ties keep input order; simultaneous overlaps go to the better
/// attribute rank.
pub fn recommend_parameters(scores: &[ParameterScore]) -> Option<ParameterScore> {
    let mut by_x: Vec<usize> = (0..scores.len()).collect();
    by_x.sort_by(|&a, &b| scores[b].mean_eps_x.total_cmp(&scores[a].mean_eps_x));
    let mut by_a: Vec<usize> = (0..scores.len()).collect();
    by_a.sort_by(|&a, &b| scores[b].mean_eps_a.total_cmp(&scores[a].mean_eps_a));
    for depth in 1..=scores.len() {
        let top_a = &by_a[..depth];
        if let Some(&hit) = by_x[..depth].iter().find(|i| top_a.contains(i)) {
            return Some(scores[hit]);
        }
    }
    None
}

/// Runs the attack grid and writes the table.
pub fn run_attack(cfg: &RunConfig) -> Result<Vec<AttackRow>> {
    cfg.validate()?;
    if cfg.attack.grid.is_empty() {
        return Err(Error::Config("attack grid is empty".into()));
    }
    let ws = load_workspace(cfg, cfg.seed)?;
    let models = train_models(cfg, &ws, cfg.seed)?;
    let d = &ws.dataset;
    let vanilla = models.vanilla.try_predict(&d.graph, &ws.x)?;
    let eta = resolve_eta(
        cfg.eta.unwrap_or(EtaSpec::Relative(1.5)),
        &vanilla,
        &ws,
        cfg.metric,
    )?;
    let scfg = cfg.smoothing_config(eta, cfg.seed);
    let acfg = AttackConfig {
        attacker: cfg.attack.attacker,
        top_frac: cfg.attack.top_frac,
        candidate_pool: cfg.attack.candidate_pool,
        seed: cfg.seed,
    };
    let rows = with_jobs(cfg.jobs, || {
        let clean = certify_and_predict(
            &models.augmented,
            &d.graph,
            &ws.x,
            &d.labels,
            &ws.split,
            &ws.split.test_pool,
            &scfg,
        )?;
        evaluate_under_attack(
            &models.vanilla,
            &models.augmented,
            &d.graph,
            &ws.x,
            &d.labels,
            &ws.split,
            &cfg.attack.grid,
            &scfg,
            &clean,
            &acfg,
        )
    })?;
    let header: Vec<String> = [
        "budget_edges",
        "budget_l2",
        "model",
        "accuracy",
        "delta_sp",
        "delta_eo",
        "outcome",
        "within_certified",
        "structure_attacker",
    ]
    .map(String::from)
    .to_vec();
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.budget_edges.to_string(),
                cell(Some(r.budget_l2)),
                r.model.clone(),
                cell(r.accuracy),
                cell(r.delta_sp),
                cell(r.delta_eo),
                r.outcome.clone(),
                r.within_certified.to_string(),
                r.structure_attacker.clone(),
            ]
        })
        .collect();
    write_csv(&cfg.out, ATTACK_FILE, &header, &table)?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(out: &Path) -> RunConfig {
        RunConfig {
            out: out.to_path_buf(),
            smoothing: SmoothingParams {
                n_outer: 20,
                n_inner: 10,
                ..Default::default()
            },
            test_sets: TestSetConfig {
                ratio: 0.9,
                count: 10,
            },
            train: TrainConfig {
                epochs: 60,
                hidden: 16,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    #[test]
    fn config_round_trips_and_rejects_unknown_fields() {
        let cfg = RunConfig::default();
        let back = RunConfig::from_json(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
        assert!(RunConfig::from_json(r#"{"sigmaa": 1}"#).is_err());
        let partial =
            RunConfig::from_json(r#"{"smoothing": {"sigma": 2.0}, "eta": {"absolute": 0.1}}"#)
                .unwrap();
        assert_eq!(partial.smoothing.sigma, 2.0);
        assert_eq!(partial.smoothing.beta, 0.9);
        assert_eq!(partial.eta, Some(EtaSpec::Absolute(0.1)));
    }

    #[test]
    fn flags_override_the_file() {
        let mut cfg =
            RunConfig::from_json(r#"{"seed": 3, "fcr_seeds": [1, 2], "metric": "sp"}"#).unwrap();
        cfg.apply(&Overrides {
            seed: Some(9),
            metric: Some(BiasMetric::EqualOpportunity),
            backbone: Some(Backbone::Sage),
            ..Default::default()
        });
        assert_eq!(cfg.seeds(), vec![9]);
        assert_eq!(cfg.metric, BiasMetric::EqualOpportunity);
        assert_eq!(cfg.train.backbone, Backbone::Sage);
    }

    #[test]
    fn fixture_files_match_the_generator() {
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/two_block");
        let files = load_source(
            &DatasetSource::Files {
                edges: dir.join("edges.txt"),
                attributes: dir.join("attributes.csv"),
                labels: dir.join("labels.csv"),
            },
            0,
        )
        .unwrap();
        let generated = load_source(&DatasetSource::Fixture, 0).unwrap();
        assert_eq!(files.graph, generated.graph);
        assert_eq!(files.labels, generated.labels);
        assert_eq!(files.attributes, generated.attributes);
    }

    #[test]
    fn thresholds_count_supersets() {
        let set = |certified, eps_a, eps_x| SetResult {
            certified,
            eps_a: Some(eps_a),
            eps_x: Some(eps_x),
            bias: None,
            accuracy: None,
            vanilla_bias: None,
            vanilla_accuracy: None,
        };
        let sets = [
            set(true, 0, 0.5),
            set(true, 3, 2.0),
            set(false, 9, 9.0),
            set(true, 1, 1.0),
        ];
        assert_eq!(
            thresholded_fcr(&sets, SweepAxis::Sigma, &[0.0, 1.0, 2.0, 3.0]),
            vec![0.75, 0.5, 0.25, 0.0]
        );
        assert_eq!(
            thresholded_fcr(&sets, SweepAxis::Beta, &[0.0, 1.0, 4.0]),
            vec![0.75, 0.5, 0.0]
        );
    }

    #[test]
    fn recommendation_takes_first_overlap() {
        let s = |sigma, beta, x, a| ParameterScore {
            sigma,
            beta,
            mean_eps_x: x,
            mean_eps_a: a,
        };
        let scores = [
            s(5.0, 0.6, 9.0, 0.0),
            s(0.5, 0.6, 2.0, 3.0),
            s(0.5, 0.9, 1.0, 1.0),
            s(0.05, 0.6, 0.1, 4.0),
        ];
        // ranking by eps_X: 0,1,2,3; by eps_A: 3,1,2,0 → first overlap at depth 2 is pair 1
        assert_eq!(recommend_parameters(&scores), Some(scores[1]));
        assert_eq!(recommend_parameters(&[]), None);
    }

    #[test]
    fn train_writes_six_metrics() {
        let dir = tempfile::tempdir().unwrap();
        let report = run_train(&small(dir.path())).unwrap();
        let m: Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join(METRICS_FILE)).unwrap())
                .unwrap();
        for model in ["vanilla", "augmented"] {
            for field in ["accuracy", "delta_sp", "delta_eo"] {
                assert!(m[model][field].is_number(), "{model}.{field}");
            }
        }
        assert!(report.vanilla.accuracy.unwrap() > 0.5);
        assert!(dir.path().join(MODEL_FILE).exists());
    }

    #[test]
    fn vacuous_and_impossible_thresholds() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small(dir.path());
        cfg.eta = Some(EtaSpec::Absolute(1.5));
        assert_eq!(run_fcr(&cfg).unwrap().fcr(), 1.0);
        cfg.eta = Some(EtaSpec::Absolute(0.0));
        assert_eq!(run_fcr(&cfg).unwrap().fcr(), 0.0);
    }

    #[test]
    fn sweep_rows_are_nonincreasing() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small(dir.path());
        cfg.eta = Some(EtaSpec::Absolute(1.5));
        cfg.sweep.axis = SweepAxis::Beta;
        let rows = run_sweep(&cfg).unwrap();
        assert_eq!(rows.len(), 4);
        for r in &rows {
            assert_eq!(r.fcr[0], 1.0);
            assert!(r.fcr.windows(2).all(|w| w[1] <= w[0]));
        }
        let text = fs::read_to_string(dir.path().join(SWEEP_FILE)).unwrap();
        assert!(text.starts_with("beta,fcr_eps_A_ge_0.0,fcr_eps_A_ge_1.0,"));
    }

    #[test]
    fn attack_rejects_empty_grid() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small(dir.path());
        cfg.attack.grid.clear();
        assert!(matches!(run_attack(&cfg), Err(Error::Config(_))));
    }
}

use ndarray::{Array, Array2, Dimension};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::model::{GcnModel, Gradients, Propagation};
use super::{Activation, Backbone};
use crate::error::{Error, Result};
use crate::fairness::accuracy;
use crate::graph::{AttributeMatrix, Graph, NodeLabels, SplitSpec};
use crate::prediction::Predictions;
use crate::rng::{self, Domain};
use crate::smoothing::{apply_structure_mask, sample_flip_mask};

/// Full-batch gradient-descent settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub weight_decay: f64,
    pub dropout: f64,
    pub hidden: usize,
    /// Heavy-ball coefficient; 0 is plain gradient descent.
    pub momentum: f64,
    /// Per-epoch flip probability of each vulnerable-incident pair.
    pub train_noise_flip_prob: f64,
    /// Per-epoch Gaussian noise on vulnerable attribute rows.
    pub train_noise_std: f64,
    pub seed: u64,
    pub backbone: Backbone,
    pub activation: Activation,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 5e-2,
            epochs: 200,
            weight_decay: 5e-4,
            dropout: 0.6,
            hidden: 64,
            momentum: 0.9,
            train_noise_flip_prob: 2e-4,
            train_noise_std: 2e-5,
            seed: 0,
            backbone: Backbone::Gcn,
            activation: Activation::Relu,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!(
                "lr must be positive, got {}",
                self.lr
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!(
                "dropout must lie in [0, 1), got {}",
                self.dropout
            )));
        }
        if self.hidden == 0 {
            return Err(Error::Config("hidden width must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        if !(0.0..0.5).contains(&self.train_noise_flip_prob) {
            return Err(Error::Config(format!(
                "train_noise_flip_prob must lie in [0, 0.5), got {}",
                self.train_noise_flip_prob
            )));
        }
        if !(self.train_noise_std >= 0.0 && self.train_noise_std.is_finite()) {
            return Err(Error::Config("train_noise_std must be ≥ 0".into()));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::Config("weight_decay must be ≥ 0".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Weights of the epoch with the best validation accuracy.
    pub model: GcnModel,
    /// 0 means the initial weights were never improved upon.
    pub best_epoch: usize,
    pub best_validation_accuracy: f64,
    /// Training loss per epoch, before the update of that epoch.
    pub losses: Vec<f64>,
}

/// Mean softmax cross-entropy over `nodes` and `∂loss/∂logits`.
pub fn cross_entropy(
    logits: &Array2<f64>,
    y: &[u8],
    nodes: &[usize],
) -> Result<(f64, Array2<f64>)> {
    if nodes.is_empty() {
        return Err(Error::Data("cross-entropy over an empty node set".into()));
    }
    let classes = logits.ncols();
    let scale = 1.0 / nodes.len() as f64;
    let mut grad = Array2::zeros(logits.dim());
    let mut loss = 0.0;
    for &i in nodes {
        let label = y[i] as usize;
        if label >= classes {
            return Err(Error::Data(format!(
                "label {label} of node {i} exceeds {classes} classes"
            )));
        }
        let row = logits.row(i);
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let sum: f64 = row.iter().map(|&v| (v - max).exp()).sum();
        let log_z = max + sum.ln();
        loss += log_z - row[label];
        for c in 0..classes {
            let p = (row[c] - log_z).exp();
            grad[[i, c]] = scale * (p - (c == label) as u8 as f64);
        }
    }
    Ok((loss * scale, grad))
}

fn step<D: Dimension>(
    param: &mut Array<f64, D>,
    grad: &Array<f64, D>,
    velocity: &mut Array<f64, D>,
    cfg: &TrainConfig,
    decay: bool,
) {
    let wd = if decay { cfg.weight_decay } else { 0.0 };
    ndarray::Zip::from(param)
        .and(grad)
        .and(velocity)
        .for_each(|p, &g, v| {
            *v = cfg.momentum * *v + g + wd * *p;
            *p -= cfg.lr * *v;
        });
}

fn apply_update(model: &mut GcnModel, grads: &Gradients, vel: &mut Gradients, cfg: &TrainConfig) {
    step(&mut model.w1, &grads.w1, &mut vel.w1, cfg, true);
    step(&mut model.b1, &grads.b1, &mut vel.b1, cfg, false);
    step(&mut model.w2, &grads.w2, &mut vel.w2, cfg, true);
    step(&mut model.b2, &grads.b2, &mut vel.b2, cfg, false);
    if let (Some(p), Some(g), Some(v)) = (&mut model.w1_self, &grads.w1_self, &mut vel.w1_self) {
        step(p, g, v, cfg, true);
    }
    if let (Some(p), Some(g), Some(v)) = (&mut model.w2_self, &grads.w2_self, &mut vel.w2_self) {
        step(p, g, v, cfg, true);
    }
}

fn zero_velocity(m: &GcnModel) -> Gradients {
    Gradients {
        w1: Array2::zeros(m.w1.dim()),
        b1: ndarray::Array1::zeros(m.b1.len()),
        w2: Array2::zeros(m.w2.dim()),
        b2: ndarray::Array1::zeros(m.b2.len()),
        w1_self: m.w1_self.as_ref().map(|w| Array2::zeros(w.dim())),
        w2_self: m.w2_self.as_ref().map(|w| Array2::zeros(w.dim())),
        x: Array2::zeros((0, 0)),
    }
}

/// Trains a two-class model on `split.train`, keeping the weights with the
/// best accuracy on `split.validation` (training accuracy if it is empty).
pub fn train(
    g: &Graph,
    x: &AttributeMatrix,
    labels: &NodeLabels,
    split: &SplitSpec,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if split.train.is_empty() {
        return Err(Error::Data("training set is empty".into()));
    }
    if labels.len() != g.num_nodes() || x.num_nodes() != g.num_nodes() {
        return Err(Error::Shape(
            "graph, attributes and labels disagree on node count".into(),
        ));
    }
    let classes = 2;
    let mut init_rng = rng::substream(cfg.seed, Domain::Training, u64::MAX);
    let mut model = GcnModel::init(
        cfg.backbone,
        cfg.activation,
        x.dim(),
        cfg.hidden,
        classes,
        &mut init_rng,
    );
    let clean = Propagation::new(cfg.backbone, g);
    let monitor: &[usize] = if split.validation.is_empty() {
        &split.train
    } else {
        &split.validation
    };
    let evaluate = |m: &GcnModel| -> Result<f64> {
        let preds = Predictions::from_logits(&m.forward(&clean, x)?);
        accuracy(&preds, &labels.y, monitor)
    };

    let mut best = model.clone();
    let mut best_acc = evaluate(&model)?;
    let mut best_epoch = 0;
    let mut velocity = zero_velocity(&model);
    let mut losses = Vec::with_capacity(cfg.epochs);
    let keep = 1.0 - cfg.dropout;

    for epoch in 1..=cfg.epochs {
        let stream = epoch as u64;
        let perturbed;
        let prop = if cfg.train_noise_flip_prob > 0.0 && !split.vulnerable.is_empty() {
            let mask = sample_flip_mask(
                1.0 - cfg.train_noise_flip_prob,
                cfg.seed,
                g.num_nodes(),
                &split.vulnerable,
                stream,
                Domain::Training,
            )?;
            perturbed = Propagation::new(cfg.backbone, &apply_structure_mask(g, &mask));
            &perturbed
        } else {
            &clean
        };
        let mut rng = rng::substream(cfg.seed, Domain::Training, stream | (1 << 62));
        let mut xe = x.0.clone();
        if cfg.train_noise_std > 0.0 {
            for &v in &split.vulnerable {
                for e in xe.row_mut(v).iter_mut() {
                    *e += cfg.train_noise_std * rng.sample::<f64, _>(StandardNormal);
                }
            }
        }
        let mask = (cfg.dropout > 0.0).then(|| {
            Array2::from_shape_simple_fn((g.num_nodes(), cfg.hidden), || {
                if rng.random::<f64>() < keep {
                    1.0 / keep
                } else {
                    0.0
                }
            })
        });
        let cache = model.forward_cached(prop, &xe.view(), mask)?;
        let (loss, dlogits) = cross_entropy(&cache.logits, &labels.y, &split.train)?;
        if !loss.is_finite() {
            return Err(Error::TrainingDiverged { epoch, loss });
        }
        losses.push(loss);
        let grads = model.backward(prop, &xe.view(), &cache, &dlogits);
        apply_update(&mut model, &grads, &mut velocity, cfg);
        if model.validate().is_err() {
            return Err(Error::TrainingDiverged {
                epoch,
                loss: f64::NAN,
            });
        }
        let acc = evaluate(&model)?;
        if acc > best_acc {
            best_acc = acc;
            best = model.clone();
            best_epoch = epoch;
        }
    }
    Ok(TrainOutcome {
        model: best,
        best_epoch,
        best_validation_accuracy: best_acc,
        losses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_cliques() -> (Graph, AttributeMatrix, NodeLabels) {
        let mut edges = Vec::new();
        for block in 0..2 {
            for u in 0..5 {
                for v in u + 1..5 {
                    edges.push((block * 5 + u, block * 5 + v));
                }
            }
        }
        let g = Graph::from_edges(10, edges).unwrap().0;
        let x = AttributeMatrix(Array2::from_shape_fn((10, 2), |(i, j)| {
            (i / 5 == j) as u8 as f64
        }));
        let y = (0..10).map(|i| (i / 5) as u8).collect();
        let s = (0..10).map(|i| (i % 2) as u8).collect();
        (g, x, NodeLabels::new(y, s).unwrap())
    }

    fn split_all() -> SplitSpec {
        SplitSpec {
            train: (0..10).collect(),
            validation: vec![],
            test_pool: vec![],
            vulnerable: vec![],
        }
    }

    #[test]
    fn separable_cliques_reach_full_accuracy() {
        let (g, x, labels) = two_cliques();
        let cfg = TrainConfig {
            hidden: 8,
            ..TrainConfig::default()
        };
        let out = train(&g, &x, &labels, &split_all(), &cfg).unwrap();
        let preds = out.model.try_predict(&g, &x).unwrap();
        assert_eq!(
            accuracy(&preds, &labels.y, &split_all().train).unwrap(),
            1.0
        );
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let (g, x, labels) = two_cliques();
        let cfg = TrainConfig {
            epochs: 0,
            hidden: 4,
            seed: 3,
            ..TrainConfig::default()
        };
        let out = train(&g, &x, &labels, &split_all(), &cfg).unwrap();
        let mut rng = rng::substream(3, Domain::Training, u64::MAX);
        let init = GcnModel::init(Backbone::Gcn, Activation::Relu, 2, 4, 2, &mut rng);
        assert_eq!(out.model, init);
        assert!(out.losses.is_empty());
    }

    #[test]
    fn training_is_deterministic() {
        let (g, x, labels) = two_cliques();
        let mut split = split_all();
        split.vulnerable = vec![0, 7];
        let cfg = TrainConfig {
            epochs: 30,
            hidden: 6,
            train_noise_flip_prob: 0.1,
            train_noise_std: 0.05,
            ..TrainConfig::default()
        };
        let a = train(&g, &x, &labels, &split, &cfg).unwrap();
        let b = train(&g, &x, &labels, &split, &cfg).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.losses, b.losses);
    }

    #[test]
    fn divergence_is_reported() {
        let (g, x, labels) = two_cliques();
        let cfg = TrainConfig {
            lr: 1e300,
            epochs: 20,
            hidden: 4,
            dropout: 0.0,
            ..TrainConfig::default()
        };
        assert!(matches!(
            train(&g, &x, &labels, &split_all(), &cfg),
            Err(Error::TrainingDiverged { .. })
        ));
    }

    #[test]
    fn config_validation() {
        let bad = TrainConfig {
            dropout: 1.0,
            ..TrainConfig::default()
        };
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
        let bad = TrainConfig {
            lr: 0.0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn cross_entropy_confident_is_near_zero() {
        let logits = ndarray::array![[50.0, -50.0], [-50.0, 50.0]];
        let (loss, grad) = cross_entropy(&logits, &[0, 1], &[0, 1]).unwrap();
        assert!(loss < 1e-30);
        assert!(grad.iter().all(|g| g.abs() < 1e-30));
        assert!(cross_entropy(&logits, &[0, 1], &[]).is_err());
    }
}

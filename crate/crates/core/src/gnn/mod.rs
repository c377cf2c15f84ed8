//! Two-layer graph neural network classifiers.
//!
//! Every certification routine treats a model as a black box mapping a graph
//! and an attribute matrix to hard predictions ([`NodeClassifier`]).

mod io;
mod model;
mod sparse;
mod train;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{AttributeMatrix, Graph};
use crate::prediction::Predictions;
use crate::smoothing::{apply_attribute_noise, AttributeNoise};

pub use io::{load_model, save_model};
pub use model::{ForwardCache, GcnModel, Gradients, NoisyPredictor, Propagation};
pub use sparse::{mean_aggregator, normalize_adjacency, SparseOperator};
pub use train::{cross_entropy, train, TrainConfig, TrainOutcome};

/// Deterministic black-box node classifier `f(A, X) → Ŷ`.
pub trait NodeClassifier: Send + Sync {
    fn predict(&self, g: &Graph, x: &AttributeMatrix) -> Predictions;

    /// Fixes the structure for repeated evaluation under attribute noise.
    ///
    /// The default re-runs [`predict`](Self::predict) on `X + noise`; models
    /// with cheaper incremental inference override it.
    fn prepare<'a>(
        &'a self,
        g: &Graph,
        x: &'a AttributeMatrix,
    ) -> Result<Box<dyn PreparedClassifier + 'a>> {
        Ok(Box::new(Recompute {
            model: self,
            g: g.clone(),
            x,
        }))
    }
}

/// A classifier bound to one structure and clean attribute matrix.
pub trait PreparedClassifier {
    fn predict_clean(&self) -> Result<Predictions>;
    fn predict_noisy(&self, noise: &AttributeNoise) -> Result<Predictions>;

    /// Classes of `nodes` only, in the given order.
    fn predict_noisy_at(&self, noise: &AttributeNoise, nodes: &[usize]) -> Result<Vec<u8>> {
        let preds = self.predict_noisy(noise)?;
        Ok(nodes.iter().map(|&v| preds.class(v)).collect())
    }

    /// [`predict_noisy_at`](Self::predict_noisy_at) for several draws,
    /// concatenated draw-major.
    fn predict_noisy_batch(&self, noises: &[AttributeNoise], nodes: &[usize]) -> Result<Vec<u8>> {
        let mut out = Vec::with_capacity(noises.len() * nodes.len());
        for noise in noises {
            out.extend(self.predict_noisy_at(noise, nodes)?);
        }
        Ok(out)
    }
}

struct Recompute<'a, C: ?Sized> {
    model: &'a C,
    g: Graph,
    x: &'a AttributeMatrix,
}

impl<C: NodeClassifier + ?Sized> PreparedClassifier for Recompute<'_, C> {
    fn predict_clean(&self) -> Result<Predictions> {
        Ok(self.model.predict(&self.g, self.x))
    }

    fn predict_noisy(&self, noise: &AttributeNoise) -> Result<Predictions> {
        let noisy = apply_attribute_noise(self.x, noise)?;
        Ok(self.model.predict(&self.g, &noisy))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backbone {
    /// Symmetric-normalized propagation with self loops.
    #[default]
    Gcn,
    /// Separate self and neighbor-mean weights.
    Sage,
}

impl fmt::Display for Backbone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Backbone::Gcn => "gcn",
            Backbone::Sage => "sage",
        })
    }
}

impl FromStr for Backbone {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gcn" => Ok(Backbone::Gcn),
            "sage" | "graphsage" => Ok(Backbone::Sage),
            other => Err(Error::Config(format!("unknown backbone {other:?}"))),
        }
    }
}

/// Hidden-layer nonlinearity.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    pub(crate) fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Relu => v.max(0.0),
            Activation::Identity => v,
        }
    }

    #[inline]
    pub(crate) fn derivative(self, pre: f64) -> f64 {
        match self {
            Activation::Relu => (pre > 0.0) as u8 as f64,
            Activation::Identity => 1.0,
        }
    }
}

//! Group-fairness metrics and the bias indicator.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gnn::NodeClassifier;
use crate::graph::{AttributeMatrix, Graph, NodeLabels};
use crate::prediction::Predictions;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BiasMetric {
    #[serde(rename = "sp")]
    StatisticalParity,
    #[serde(rename = "eo")]
    EqualOpportunity,
}

impl fmt::Display for BiasMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BiasMetric::StatisticalParity => "sp",
            BiasMetric::EqualOpportunity => "eo",
        })
    }
}

impl FromStr for BiasMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sp" | "statistical_parity" => Ok(BiasMetric::StatisticalParity),
            "eo" | "equal_opportunity" => Ok(BiasMetric::EqualOpportunity),
            other => Err(Error::Config(format!("unknown bias metric {other:?}"))),
        }
    }
}

/// Where a threshold came from.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ThresholdProvenance {
    Absolute,
    Relative { multiplier: f64, vanilla_bias: f64 },
}

/// Bias threshold η; the indicator is 1 iff the bias is strictly below it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiasThreshold {
    pub eta: f64,
    pub provenance: ThresholdProvenance,
}

impl BiasThreshold {
    pub fn absolute(eta: f64) -> Result<Self> {
        if eta.is_nan() || eta < 0.0 {
            return Err(Error::Config(format!("eta must be ≥ 0, got {eta}")));
        }
        Ok(BiasThreshold {
            eta,
            provenance: ThresholdProvenance::Absolute,
        })
    }

    /// `eta = multiplier × vanilla_bias`.
    pub fn relative(multiplier: f64, vanilla_bias: f64) -> Result<Self> {
        if !(multiplier >= 0.0) || !(vanilla_bias >= 0.0) {
            return Err(Error::Config(format!(
                "relative eta needs non-negative multiplier and bias, got {multiplier} × {vanilla_bias}"
            )));
        }
        Ok(BiasThreshold {
            eta: multiplier * vanilla_bias,
            provenance: ThresholdProvenance::Relative {
                multiplier,
                vanilla_bias,
            },
        })
    }

    pub fn admits(&self, bias: f64) -> bool {
        bias < self.eta
    }
}

fn positive_rate<'a>(preds: &Predictions, nodes: impl Iterator<Item = &'a usize>) -> Option<f64> {
    let (mut pos, mut total) = (0usize, 0usize);
    for &i in nodes {
        total += 1;
        pos += (preds.class(i) == 1) as usize;
    }
    (total > 0).then(|| pos as f64 / total as f64)
}

/// Statistical parity gap `|P(ŷ=1 | s=0) − P(ŷ=1 | s=1)|` over `nodes`.
pub fn delta_sp(preds: &Predictions, s: &[u8], nodes: &[usize]) -> Result<f64> {
    let g0 = positive_rate(preds, nodes.iter().filter(|&&i| s[i] == 0));
    let g1 = positive_rate(preds, nodes.iter().filter(|&&i| s[i] == 1));
    match (g0, g1) {
        (Some(a), Some(b)) => Ok((a - b).abs()),
        _ => Err(Error::UndefinedMetric(
            "statistical parity needs both sensitive groups in the node set".into(),
        )),
    }
}

/// Equal opportunity gap `|P(ŷ=1 | y=1, s=0) − P(ŷ=1 | y=1, s=1)|` over `nodes`.
pub fn delta_eo(preds: &Predictions, y: &[u8], s: &[u8], nodes: &[usize]) -> Result<f64> {
    let g0 = positive_rate(preds, nodes.iter().filter(|&&i| y[i] == 1 && s[i] == 0));
    let g1 = positive_rate(preds, nodes.iter().filter(|&&i| y[i] == 1 && s[i] == 1));
    match (g0, g1) {
        (Some(a), Some(b)) => Ok((a - b).abs()),
        _ => Err(Error::UndefinedMetric(
            "equal opportunity needs a positive-label node in both sensitive groups".into(),
        )),
    }
}

/// Fraction of `nodes` whose predicted class equals the label.
pub fn accuracy(preds: &Predictions, y: &[u8], nodes: &[usize]) -> Result<f64> {
    if nodes.is_empty() {
        return Err(Error::UndefinedMetric(
            "accuracy over an empty node set".into(),
        ));
    }
    let hits = nodes.iter().filter(|&&i| preds.class(i) == y[i]).count();
    Ok(hits as f64 / nodes.len() as f64)
}

/// Bias of `preds` under `metric`.
pub fn bias(
    metric: BiasMetric,
    preds: &Predictions,
    labels: &NodeLabels,
    nodes: &[usize],
) -> Result<f64> {
    match metric {
        BiasMetric::StatisticalParity => delta_sp(preds, &labels.s, nodes),
        BiasMetric::EqualOpportunity => delta_eo(preds, &labels.y, &labels.s, nodes),
    }
}

/// `1(π(preds, nodes) < η)` computed from existing predictions.
pub fn indicator_of(
    preds: &Predictions,
    eta: &BiasThreshold,
    metric: BiasMetric,
    nodes: &[usize],
    labels: &NodeLabels,
) -> Result<bool> {
    Ok(eta.admits(bias(metric, preds, labels, nodes)?))
}

/// Bias indicator of a classifier on a graph: true iff its bias on `nodes`
/// is strictly below `eta`.
pub fn bias_indicator<C: NodeClassifier + ?Sized>(
    model: &C,
    g: &Graph,
    x: &AttributeMatrix,
    eta: &BiasThreshold,
    metric: BiasMetric,
    nodes: &[usize],
    labels: &NodeLabels,
) -> Result<bool> {
    let preds = model.predict(g, x);
    indicator_of(&preds, eta, metric, nodes, labels)
}

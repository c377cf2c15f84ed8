//! Noise samplers and appliers for the two smoothing constructions:
//! Gaussian noise on the attribute rows of vulnerable nodes, and symmetric
//! Bernoulli flips on node pairs that touch a vulnerable node.

use std::fmt::Write as _;

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fairness::{BiasMetric, BiasThreshold};
use crate::graph::{canonical, AttributeMatrix, Graph, Pair};
use crate::rng::{self, Domain};

/// How the structure-noise dimension is counted.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DimensionConvention {
    /// Unordered pairs touching a vulnerable node, each counted once:
    /// `|V|(n − |V|) + C(|V|, 2)`.
    #[default]
    Deduplicated,
    /// `n · |V|` row entries before mirroring.
    RowEntries,
}

/// Number of independent Bernoulli coordinates of the structure noise.
pub fn domain_size(n: usize, n_vulnerable: usize, convention: DimensionConvention) -> usize {
    match convention {
        DimensionConvention::Deduplicated => {
            n_vulnerable * (n - n_vulnerable) + n_vulnerable * n_vulnerable.saturating_sub(1) / 2
        }
        DimensionConvention::RowEntries => n * n_vulnerable,
    }
}

/// All parameters of the nested smoothing and its certification.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoothingConfig {
    /// Standard deviation of the attribute noise.
    pub sigma: f64,
    /// Probability of keeping a pair unflipped; must exceed 0.5.
    pub beta: f64,
    /// Structure (outer) sample count.
    pub n_outer: usize,
    /// Attribute (inner) sample count per structure sample.
    pub n_inner: usize,
    /// Estimates hold at confidence `1 − alpha`.
    pub alpha: f64,
    pub eta: BiasThreshold,
    pub metric: BiasMetric,
    pub master_seed: u64,
    /// Upper end of the structure-budget traversal.
    pub k_max: usize,
    pub dimension: DimensionConvention,
    /// Count undecidable structure samples as a 0 vote instead of aborting.
    pub tolerant: bool,
}

impl SmoothingConfig {
    pub fn new(eta: BiasThreshold) -> Self {
        SmoothingConfig {
            sigma: 0.5,
            beta: 0.9,
            n_outer: 200,
            n_inner: 150,
            alpha: 0.3,
            eta,
            metric: BiasMetric::StatisticalParity,
            master_seed: 0,
            k_max: 64,
            dimension: DimensionConvention::Deduplicated,
            tolerant: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::Config(format!(
                "sigma must be positive, got {}",
                self.sigma
            )));
        }
        if !(self.beta > 0.5 && self.beta < 1.0) {
            return Err(Error::Config(format!(
                "beta must lie in (0.5, 1), got {}",
                self.beta
            )));
        }
        if self.n_outer == 0 || self.n_inner == 0 {
            return Err(Error::Config("sample counts must be at least 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        if self.eta.eta.is_nan() || self.eta.eta < 0.0 {
            return Err(Error::Config(format!(
                "eta must be ≥ 0, got {}",
                self.eta.eta
            )));
        }
        Ok(())
    }
}

/// Gaussian noise on the vulnerable rows; every other row is implicitly zero.
#[derive(Clone, Debug, PartialEq)]
pub struct AttributeNoise {
    pub vulnerable: Vec<usize>,
    /// `|vulnerable| × d`, row `r` belongs to node `vulnerable[r]`.
    pub block: Array2<f64>,
}

impl AttributeNoise {
    pub fn zeros(vulnerable: &[usize], d: usize) -> Self {
        AttributeNoise {
            vulnerable: vulnerable.to_vec(),
            block: Array2::zeros((vulnerable.len(), d)),
        }
    }

    pub fn negated(&self) -> Self {
        AttributeNoise {
            vulnerable: self.vulnerable.clone(),
            block: -&self.block,
        }
    }
}

/// I.i.d. `N(0, σ²)` block for the vulnerable rows, keyed by `(master_seed, stream_id)`.
pub fn sample_attribute_noise(
    cfg: &SmoothingConfig,
    vulnerable: &[usize],
    d: usize,
    stream_id: u64,
) -> Result<AttributeNoise> {
    if !(cfg.sigma > 0.0 && cfg.sigma.is_finite()) {
        return Err(Error::Config(format!(
            "sigma must be positive, got {}",
            cfg.sigma
        )));
    }
    let mut rng = rng::substream(cfg.master_seed, Domain::AttributeNoise, stream_id);
    let block = Array2::from_shape_simple_fn((vulnerable.len(), d), || {
        cfg.sigma * rng.sample::<f64, _>(StandardNormal)
    });
    Ok(AttributeNoise {
        vulnerable: vulnerable.to_vec(),
        block,
    })
}

/// Sorted set of node pairs to flip, each touching a vulnerable node.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StructureMask {
    pub flips: Vec<Pair>,
    /// Number of eligible pairs the mask was drawn over.
    pub domain_size: usize,
}

impl StructureMask {
    pub fn empty(domain_size: usize) -> Self {
        StructureMask {
            flips: Vec::new(),
            domain_size,
        }
    }

    /// One `u v` pair per line.
    pub fn to_pair_list(&self) -> String {
        let mut out = String::new();
        for &(u, v) in &self.flips {
            let _ = writeln!(out, "{u} {v}");
        }
        out
    }

    pub fn from_pair_list(text: &str, domain_size: usize) -> Result<Self> {
        let mut flips = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let nums: Vec<usize> = line
                .split_whitespace()
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Data(format!("pair list line {}: {e}", i + 1)))?;
            match nums.as_slice() {
                [u, v] if u != v => flips.push(canonical(*u, *v)),
                _ => {
                    return Err(Error::Data(format!(
                        "pair list line {}: expected two distinct ids",
                        i + 1
                    )))
                }
            }
        }
        flips.sort_unstable();
        flips.dedup();
        Ok(StructureMask { flips, domain_size })
    }
}

/// Visits every unordered pair touching `vulnerable` exactly once, in a fixed order.
pub fn for_each_eligible_pair(n: usize, vulnerable: &[usize], mut visit: impl FnMut(Pair)) {
    let mut is_vul = vec![usize::MAX; n];
    for (rank, &v) in vulnerable.iter().enumerate() {
        is_vul[v] = rank;
    }
    for (rank, &v) in vulnerable.iter().enumerate() {
        for u in 0..n {
            // pairs between two vulnerable nodes belong to the lower-ranked one
            if u == v || is_vul[u] < rank {
                continue;
            }
            visit(canonical(u, v));
        }
    }
}

/// Each eligible pair flips independently with probability `1 − β`.
pub fn sample_structure_mask(
    cfg: &SmoothingConfig,
    g: &Graph,
    vulnerable: &[usize],
    stream_id: u64,
) -> Result<StructureMask> {
    sample_flip_mask(
        cfg.beta,
        cfg.master_seed,
        g.num_nodes(),
        vulnerable,
        stream_id,
        Domain::StructureMask,
    )
}

pub(crate) fn sample_flip_mask(
    beta: f64,
    seed: u64,
    n: usize,
    vulnerable: &[usize],
    stream_id: u64,
    domain: Domain,
) -> Result<StructureMask> {
    if !(beta > 0.5 && beta <= 1.0) {
        return Err(Error::Config(format!(
            "beta must lie in (0.5, 1], got {beta}"
        )));
    }
    let flip_prob = 1.0 - beta;
    let mut rng = rng::substream(seed, domain, stream_id);
    let mut flips = Vec::new();
    let mut d = 0usize;
    for_each_eligible_pair(n, vulnerable, |pair| {
        d += 1;
        if rng.random::<f64>() < flip_prob {
            flips.push(pair);
        }
    });
    flips.sort_unstable();
    Ok(StructureMask {
        flips,
        domain_size: d,
    })
}

/// `A ⊕ Γ_A`: the symmetric difference of the edge set and the mask.
pub fn apply_structure_mask(g: &Graph, m: &StructureMask) -> Graph {
    g.symmetric_difference(&m.flips)
}

/// `X + Γ_X`: adds the noise block to the vulnerable rows.
pub fn apply_attribute_noise(
    x: &AttributeMatrix,
    noise: &AttributeNoise,
) -> Result<AttributeMatrix> {
    if noise.block.ncols() != x.dim() || noise.block.nrows() != noise.vulnerable.len() {
        return Err(Error::Shape(format!(
            "noise block {:?} does not fit {} vulnerable rows of width {}",
            noise.block.dim(),
            noise.vulnerable.len(),
            x.dim()
        )));
    }
    let mut out = x.0.clone();
    for (r, &v) in noise.vulnerable.iter().enumerate() {
        if v >= x.num_nodes() {
            return Err(Error::Shape(format!("vulnerable node {v} out of range")));
        }
        let mut row = out.row_mut(v);
        row += &noise.block.row(r);
    }
    Ok(AttributeMatrix(out))
}

//! Seeded generators for attributed graphs with planted group bias.
//!
//! Labels depend on the sensitive attribute, some attribute columns are
//! noisy proxies of the label or of the sensitive attribute, and edges are
//! homophilous in both, so a vanilla classifier inherits a measurable
//! statistical-parity gap.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{AttributeMatrix, Dataset, Graph, LoadWarnings, NodeLabels};
use crate::rng::{self, Domain};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n: usize,
    pub d: usize,
    /// Share of nodes with `s = 1`.
    pub minority_frac: f64,
    /// `P(y = 1 | s = 0)`.
    pub positive_rate_majority: f64,
    /// `P(y = 1 | s = 1)`.
    pub positive_rate_minority: f64,
    /// Binary columns whose rate is `(1 ± label_signal)/2` according to `y`.
    pub label_columns: usize,
    pub label_signal: f64,
    /// Binary columns whose rate is `(1 ± sensitive_signal)/2` according to `s`.
    pub sensitive_columns: usize,
    pub sensitive_signal: f64,
    pub avg_degree: f64,
    /// Edge-odds multiplier for pairs sharing `s`.
    pub sensitive_homophily: f64,
    /// Edge-odds multiplier for pairs sharing `y`.
    pub label_homophily: f64,
    pub seed: u64,
}

impl SyntheticConfig {
    /// Scale of the German Credit graph: 1000 nodes, 27 attributes, about
    /// 11k undirected edges, 70% positive labels.
    pub fn german_like(seed: u64) -> Self {
        SyntheticConfig {
            n: 1000,
            d: 27,
            minority_frac: 0.31,
            positive_rate_majority: 0.76,
            positive_rate_minority: 0.5,
            label_columns: 4,
            label_signal: 0.2,
            sensitive_columns: 3,
            sensitive_signal: 0.8,
            avg_degree: 22.0,
            sensitive_homophily: 4.0,
            label_homophily: 1.5,
            seed,
        }
    }

    /// Small two-block graph whose blocks are the sensitive groups.
    pub fn two_block(seed: u64) -> Self {
        SyntheticConfig {
            n: 200,
            d: 8,
            minority_frac: 0.5,
            positive_rate_majority: 0.7,
            positive_rate_minority: 0.35,
            label_columns: 3,
            label_signal: 0.6,
            sensitive_columns: 2,
            sensitive_signal: 0.8,
            avg_degree: 8.0,
            sensitive_homophily: 5.0,
            label_homophily: 1.5,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let probs = [
            self.minority_frac,
            self.positive_rate_majority,
            self.positive_rate_minority,
        ];
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Config("synthetic rates must lie in [0, 1]".into()));
        }
        if self.n < 2 || self.label_columns + self.sensitive_columns > self.d {
            return Err(Error::Config("synthetic shape is inconsistent".into()));
        }
        if !(self.avg_degree >= 0.0 && self.sensitive_homophily > 0.0 && self.label_homophily > 0.0)
        {
            return Err(Error::Config(
                "synthetic edge parameters must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Draws a dataset from `cfg`.
pub fn generate(cfg: &SyntheticConfig) -> Result<Dataset> {
    cfg.validate()?;
    let n = cfg.n;
    let mut rng = rng::substream(cfg.seed, Domain::Synthetic, 0);
    let s: Vec<u8> = (0..n)
        .map(|_| (rng.random::<f64>() < cfg.minority_frac) as u8)
        .collect();
    let y: Vec<u8> = s
        .iter()
        .map(|&g| {
            let rate = if g == 1 {
                cfg.positive_rate_minority
            } else {
                cfg.positive_rate_majority
            };
            (rng.random::<f64>() < rate) as u8
        })
        .collect();

    // binary columns, as in one-hot coded tabular data
    let mut x = Array2::<f64>::zeros((n, cfg.d));
    for i in 0..n {
        let ys = 2.0 * y[i] as f64 - 1.0;
        let ss = 2.0 * s[i] as f64 - 1.0;
        for j in 0..cfg.d {
            let shift = if j < cfg.label_columns {
                cfg.label_signal * ys
            } else if j < cfg.label_columns + cfg.sensitive_columns {
                cfg.sensitive_signal * ss
            } else {
                0.0
            };
            x[[i, j]] = (rng.random::<f64>() < 0.5 + 0.5 * shift) as u8 as f64;
        }
    }

    // edge probability ∝ homophily weights, scaled to the target mean degree
    let weight = |u: usize, v: usize| {
        let mut w = 1.0;
        if s[u] == s[v] {
            w *= cfg.sensitive_homophily;
        }
        if y[u] == y[v] {
            w *= cfg.label_homophily;
        }
        w
    };
    let mut counts = [[0usize; 2]; 2];
    for i in 0..n {
        counts[s[i] as usize][y[i] as usize] += 1;
    }
    let mut total_weight = 0.0;
    for (a, b) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
        for (c, d) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            let pairs = if (a, b) == (c, d) {
                counts[a][b] as f64 * (counts[a][b] as f64 - 1.0)
            } else {
                counts[a][b] as f64 * counts[c][d] as f64
            };
            let mut w = 1.0;
            if a == c {
                w *= cfg.sensitive_homophily;
            }
            if b == d {
                w *= cfg.label_homophily;
            }
            total_weight += pairs * w;
        }
    }
    // ordered-pair total / 2 = unordered; expected edges = n·deg/2
    let scale = if total_weight > 0.0 {
        (n as f64 * cfg.avg_degree) / total_weight
    } else {
        0.0
    };
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.random::<f64>() < (scale * weight(u, v)).min(1.0) {
                edges.push((u, v));
            }
        }
    }
    let graph = Graph::from_edges(n, edges)?.0;
    Ok(Dataset {
        graph,
        attributes: AttributeMatrix(x),
        labels: NodeLabels::new(y, s)?,
        warnings: LoadWarnings::default(),
    })
}

/// Paths of a dataset written by [`write_dataset`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetFiles {
    pub edges: PathBuf,
    pub attributes: PathBuf,
    pub labels: PathBuf,
}

impl DatasetFiles {
    /// Conventional file names inside `dir`.
    pub fn in_dir(dir: &Path) -> Self {
        DatasetFiles {
            edges: dir.join("edges.txt"),
            attributes: dir.join("attributes.csv"),
            labels: dir.join("labels.csv"),
        }
    }
}

/// Writes the three loader-compatible files into `dir`.
pub fn write_dataset(ds: &Dataset, dir: &Path) -> Result<DatasetFiles> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = DatasetFiles::in_dir(dir);
    let create = |p: &Path| {
        File::create(p)
            .map(BufWriter::new)
            .map_err(|e| Error::io(p, e))
    };

    let mut w = create(&files.edges)?;
    for (u, v) in ds.graph.edges() {
        writeln!(w, "{u} {v}").map_err(|e| Error::io(&files.edges, e))?;
    }
    w.flush().map_err(|e| Error::io(&files.edges, e))?;

    let mut w = create(&files.attributes)?;
    let header: Vec<String> = (0..ds.attributes.dim()).map(|j| format!("x{j}")).collect();
    writeln!(w, "{}", header.join(",")).map_err(|e| Error::io(&files.attributes, e))?;
    for row in ds.attributes.0.rows() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.6}")).collect();
        writeln!(w, "{}", cells.join(",")).map_err(|e| Error::io(&files.attributes, e))?;
    }
    w.flush().map_err(|e| Error::io(&files.attributes, e))?;

    let mut w = create(&files.labels)?;
    writeln!(w, "node_id,label,sensitive").map_err(|e| Error::io(&files.labels, e))?;
    for i in 0..ds.labels.len() {
        writeln!(w, "{i},{},{}", ds.labels.y[i], ds.labels.s[i])
            .map_err(|e| Error::io(&files.labels, e))?;
    }
    w.flush().map_err(|e| Error::io(&files.labels, e))?;
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::load_dataset;

    #[test]
    fn german_like_matches_target_statistics() {
        let ds = generate(&SyntheticConfig::german_like(1)).unwrap();
        assert_eq!(ds.attributes.0.dim(), (1000, 27));
        let edges = ds.graph.num_edges() as f64;
        assert!((edges - 11_000.0).abs() < 600.0, "{edges} edges");
        let pos = ds.labels.y.iter().filter(|&&v| v == 1).count() as f64 / 1000.0;
        assert!((pos - 0.7).abs() < 0.05, "positive rate {pos}");
    }

    #[test]
    fn generation_is_seeded() {
        let a = generate(&SyntheticConfig::two_block(4)).unwrap();
        let b = generate(&SyntheticConfig::two_block(4)).unwrap();
        let c = generate(&SyntheticConfig::two_block(5)).unwrap();
        assert_eq!(a.graph, b.graph);
        assert_eq!(a.attributes, b.attributes);
        assert_ne!(a.graph, c.graph);
    }

    #[test]
    fn written_files_load_back() {
        let ds = generate(&SyntheticConfig::two_block(2)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let files = write_dataset(&ds, dir.path()).unwrap();
        let back = load_dataset(&files.edges, &files.attributes, &files.labels).unwrap();
        assert_eq!(back.graph, ds.graph);
        assert_eq!(back.labels, ds.labels);
        for (a, b) in back.attributes.0.iter().zip(ds.attributes.0.iter()) {
            assert!((a - b).abs() < 1e-6);
        }
    }
}

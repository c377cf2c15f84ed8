//! Attributed-graph datasets: the undirected structure, node attributes,
//! labels, and the train/validation/test/vulnerable partition.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use ndarray::{Array2, ArrayView1};
use rand::seq::{IteratorRandom, SliceRandom};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Domain};

/// Canonical unordered node pair, smaller id first.
pub type Pair = (u32, u32);

/// Orders a pair so that `u < v`. Callers guarantee `u != v`.
#[inline]
pub fn canonical(u: usize, v: usize) -> Pair {
    debug_assert_ne!(u, v);
    if u < v {
        (u as u32, v as u32)
    } else {
        (v as u32, u as u32)
    }
}

/// Undirected simple graph stored as a sorted set of canonical pairs.
///
/// One pair stands for both symmetric adjacency entries, so flipping an edge
/// always changes `A[u,v]` and `A[v,u]` together.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    edges: Vec<Pair>,
}

impl Graph {
    pub fn empty(n: usize) -> Self {
        Graph {
            n,
            edges: Vec::new(),
        }
    }

    /// Builds a graph, dropping self-loops and repeated pairs.
    ///
    /// Returns the graph plus `(self_loops, duplicates)` dropped. Out-of-range
    /// ids are an error.
    pub fn from_edges<I>(n: usize, edges: I) -> Result<(Self, usize, usize)>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut self_loops = 0;
        let mut raw = Vec::new();
        for (u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::Data(format!(
                    "edge ({u}, {v}) out of bounds for {n} nodes"
                )));
            }
            if u == v {
                self_loops += 1;
                continue;
            }
            raw.push(canonical(u, v));
        }
        let total = raw.len();
        raw.sort_unstable();
        raw.dedup();
        let duplicates = total - raw.len();
        Ok((Graph { n, edges: raw }, self_loops, duplicates))
    }

    /// Strict constructor for code paths that already hold valid pairs.
    pub fn from_pairs(n: usize, mut edges: Vec<Pair>) -> Result<Self> {
        edges.sort_unstable();
        edges.dedup();
        if let Some(&(u, v)) = edges.iter().find(|&&(u, v)| u >= v || v as usize >= n) {
            return Err(Error::Data(format!(
                "invalid pair ({u}, {v}) for {n} nodes"
            )));
        }
        Ok(Graph { n, edges })
    }

    pub fn num_nodes(&self) -> usize {
        self.n
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn pairs(&self) -> &[Pair] {
        &self.edges
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().map(|&(u, v)| (u as usize, v as usize))
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        u != v && self.edges.binary_search(&canonical(u, v)).is_ok()
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n];
        for &(u, v) in &self.edges {
            deg[u as usize] += 1;
            deg[v as usize] += 1;
        }
        deg
    }

    /// Edge set XOR a sorted, deduplicated list of canonical pairs.
    pub fn symmetric_difference(&self, flips: &[Pair]) -> Graph {
        debug_assert!(flips.windows(2).all(|w| w[0] < w[1]));
        let mut out = Vec::with_capacity(self.edges.len() + flips.len());
        let (mut i, mut j) = (0, 0);
        while i < self.edges.len() && j < flips.len() {
            match self.edges[i].cmp(&flips[j]) {
                std::cmp::Ordering::Less => {
                    out.push(self.edges[i]);
                    i += 1;
                }
                std::cmp::Ordering::Greater => {
                    out.push(flips[j]);
                    j += 1;
                }
                std::cmp::Ordering::Equal => {
                    i += 1;
                    j += 1;
                }
            }
        }
        out.extend_from_slice(&self.edges[i..]);
        out.extend_from_slice(&flips[j..]);
        Graph {
            n: self.n,
            edges: out,
        }
    }

    /// Relabels nodes: node `i` becomes `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Graph {
        assert_eq!(perm.len(), self.n);
        let mut edges: Vec<Pair> = self
            .edges
            .iter()
            .map(|&(u, v)| canonical(perm[u as usize], perm[v as usize]))
            .collect();
        edges.sort_unstable();
        Graph { n: self.n, edges }
    }
}

/// Dense `n × d` node attribute matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct AttributeMatrix(pub Array2<f64>);

impl AttributeMatrix {
    pub fn new(values: Array2<f64>) -> Self {
        AttributeMatrix(values)
    }

    pub fn num_nodes(&self) -> usize {
        self.0.nrows()
    }

    pub fn dim(&self) -> usize {
        self.0.ncols()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.0.row(i)
    }
}

/// Class labels and binary sensitive attribute per node.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeLabels {
    pub y: Vec<u8>,
    pub s: Vec<u8>,
}

impl NodeLabels {
    pub fn new(y: Vec<u8>, s: Vec<u8>) -> Result<Self> {
        if y.len() != s.len() {
            return Err(Error::Data(format!(
                "label length {} differs from sensitive length {}",
                y.len(),
                s.len()
            )));
        }
        if let Some(i) = y.iter().position(|&c| c > 1) {
            return Err(Error::Data(format!("node {i}: class label must be 0 or 1")));
        }
        if let Some(i) = s.iter().position(|&c| c > 1) {
            return Err(Error::Data(format!(
                "node {i}: sensitive attribute must be 0 or 1"
            )));
        }
        Ok(NodeLabels { y, s })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

/// Disjoint node partition plus the vulnerable subset of the test pool.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test_pool: Vec<usize>,
    pub vulnerable: Vec<usize>,
}

impl SplitSpec {
    /// Checks disjointness and `vulnerable ⊆ test_pool`.
    pub fn validate(&self, n: usize) -> Result<()> {
        let mut seen = vec![0u8; n];
        for (tag, set) in [
            (1u8, &self.train),
            (2, &self.validation),
            (3, &self.test_pool),
        ] {
            for &i in set.iter() {
                if i >= n {
                    return Err(Error::Data(format!("split node {i} out of bounds")));
                }
                if seen[i] != 0 {
                    return Err(Error::Data(format!("node {i} appears in two splits")));
                }
                seen[i] = tag;
            }
        }
        if let Some(&v) = self.vulnerable.iter().find(|&&v| v >= n || seen[v] != 3) {
            return Err(Error::Data(format!(
                "vulnerable node {v} is not in the test pool"
            )));
        }
        Ok(())
    }
}

/// Counts of malformed-but-recoverable edge rows dropped at load time.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct LoadWarnings {
    pub self_loops: usize,
    pub duplicate_edges: usize,
}

impl LoadWarnings {
    pub fn total(&self) -> usize {
        self.self_loops + self.duplicate_edges
    }
}

/// A loaded attributed graph.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub graph: Graph,
    pub attributes: AttributeMatrix,
    pub labels: NodeLabels,
    pub warnings: LoadWarnings,
}

fn parse_id(token: &str) -> Option<usize> {
    let t = token.trim();
    if let Ok(v) = t.parse::<usize>() {
        return Some(v);
    }
    // some exports write ids as floats, e.g. "3.0" or "3.000000000000000000e+00"
    let f: f64 = t.parse().ok()?;
    (f >= 0.0 && f.fract() == 0.0 && f < u32::MAX as f64).then_some(f as usize)
}

/// Reads an edge list with one `u v` or `u,v` pair per line.
pub fn read_edges(path: &Path, n: usize) -> Result<(Graph, LoadWarnings)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut pairs = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let lineno = idx as u64 + 1;
        let body = line.trim();
        if body.is_empty() || body.starts_with('#') {
            continue;
        }
        let mut tokens = body
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty());
        let (Some(a), Some(b), None) = (tokens.next(), tokens.next(), tokens.next()) else {
            return Err(Error::Parse {
                path: path.into(),
                line: lineno,
                message: format!("expected two node ids, got {body:?}"),
            });
        };
        let (Some(u), Some(v)) = (parse_id(a), parse_id(b)) else {
            return Err(Error::Parse {
                path: path.into(),
                line: lineno,
                message: format!("node ids must be non-negative integers, got {body:?}"),
            });
        };
        if let Some(id) = [u, v].into_iter().find(|&id| id >= n) {
            return Err(Error::NodeBounds {
                path: path.into(),
                id,
                n,
            });
        }
        pairs.push((u, v));
    }
    let (graph, self_loops, duplicate_edges) = Graph::from_edges(n, pairs)?;
    Ok((
        graph,
        LoadWarnings {
            self_loops,
            duplicate_edges,
        },
    ))
}

fn csv_reader(path: &Path) -> Result<csv::Reader<File>> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::Data(format!("{}: {other:?}", path.display())),
        })
}

fn csv_record(path: &Path, rec: csv::Result<csv::StringRecord>) -> Result<csv::StringRecord> {
    rec.map_err(|e| {
        let line = e.position().map(|p| p.line()).unwrap_or(0);
        Error::Parse {
            path: path.into(),
            line,
            message: e.to_string(),
        }
    })
}

/// Reads an `n × d` numeric CSV; a non-numeric first row is treated as a header.
pub fn read_attributes(path: &Path) -> Result<AttributeMatrix> {
    let mut reader = csv_reader(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    for (idx, rec) in reader.records().enumerate() {
        let rec = csv_record(path, rec)?;
        let line = rec.position().map(|p| p.line()).unwrap_or(idx as u64 + 1);
        let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        let row = match parsed {
            Ok(row) => row,
            Err(_) if idx == 0 => continue,
            Err(e) => {
                return Err(Error::Parse {
                    path: path.into(),
                    line,
                    message: format!("non-numeric attribute value: {e}"),
                })
            }
        };
        if let Some(bad) = row.iter().position(|v| !v.is_finite()) {
            return Err(Error::Parse {
                path: path.into(),
                line,
                message: format!("column {bad} is not finite"),
            });
        }
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(Error::Parse {
                    path: path.into(),
                    line,
                    message: format!("expected {w} columns, found {}", row.len()),
                })
            }
            _ => {}
        }
        rows.push(row);
    }
    let d = width.unwrap_or(0);
    if rows.is_empty() || d == 0 {
        return Err(Error::Data(format!(
            "{}: no attribute rows",
            path.display()
        )));
    }
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    let n = flat.len() / d;
    let values = Array2::from_shape_vec((n, d), flat).map_err(|e| Error::Shape(e.to_string()))?;
    Ok(AttributeMatrix(values))
}

/// Reads `node_id,label,sensitive` rows covering every node `0..n`.
pub fn read_labels(path: &Path, n: usize) -> Result<NodeLabels> {
    let mut reader = csv_reader(path)?;
    let mut y = vec![None; n];
    let mut s = vec![0u8; n];
    for (idx, rec) in reader.records().enumerate() {
        let rec = csv_record(path, rec)?;
        let line = rec.position().map(|p| p.line()).unwrap_or(idx as u64 + 1);
        if rec.len() != 3 {
            return Err(Error::Parse {
                path: path.into(),
                line,
                message: format!(
                    "expected node_id,label,sensitive; found {} fields",
                    rec.len()
                ),
            });
        }
        let id = parse_id(&rec[0]);
        let label = parse_id(&rec[1]);
        let sens = parse_id(&rec[2]);
        let (Some(id), Some(label), Some(sens)) = (id, label, sens) else {
            if idx == 0 {
                continue;
            }
            return Err(Error::Parse {
                path: path.into(),
                line,
                message: "fields must be non-negative integers".into(),
            });
        };
        if id >= n {
            return Err(Error::NodeBounds {
                path: path.into(),
                id,
                n,
            });
        }
        if label > 1 || sens > 1 {
            return Err(Error::Parse {
                path: path.into(),
                line,
                message: "label and sensitive attribute must be 0 or 1".into(),
            });
        }
        y[id] = Some(label as u8);
        s[id] = sens as u8;
    }
    let y: Option<Vec<u8>> = y.into_iter().collect();
    let Some(y) = y else {
        return Err(Error::Data(format!(
            "{}: some nodes in 0..{n} have no label row",
            path.display()
        )));
    };
    NodeLabels::new(y, s)
}

/// Loads the three dataset files. The node count comes from the attribute file.
pub fn load_dataset(edge_file: &Path, attribute_file: &Path, label_file: &Path) -> Result<Dataset> {
    let attributes = read_attributes(attribute_file)?;
    let n = attributes.num_nodes();
    let labels = read_labels(label_file, n)?;
    let (graph, warnings) = read_edges(edge_file, n)?;
    if warnings.total() > 0 {
        log::warn!(
            "{}: dropped {} self-loops and {} duplicate edges",
            edge_file.display(),
            warnings.self_loops,
            warnings.duplicate_edges
        );
    }
    Ok(Dataset {
        graph,
        attributes,
        labels,
        warnings,
    })
}

/// Min-max scales every column to `[0, 1]`; constant columns become 0.
pub fn normalize_attributes(x: &AttributeMatrix) -> AttributeMatrix {
    let mut out = x.0.clone();
    for mut col in out.columns_mut() {
        let (lo, hi) = col
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        let span = hi - lo;
        if span > 0.0 {
            col.mapv_inplace(|v| (v - lo) / span);
        } else {
            col.fill(0.0);
        }
    }
    AttributeMatrix(out)
}

fn check_fraction(name: &str, f: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&f) || !f.is_finite() {
        return Err(Error::Config(format!("{name} = {f} must lie in [0, 1]")));
    }
    Ok(())
}

/// Seeded train/validation/test partition; `vul_frac` is a fraction of all nodes.
pub fn make_splits(
    n: usize,
    seed: u64,
    train_frac: f64,
    val_frac: f64,
    vul_frac: f64,
) -> Result<SplitSpec> {
    check_fraction("train_frac", train_frac)?;
    check_fraction("val_frac", val_frac)?;
    check_fraction("vul_frac", vul_frac)?;
    if train_frac + val_frac >= 1.0 {
        return Err(Error::Config(format!(
            "train_frac + val_frac = {} leaves no test pool",
            train_frac + val_frac
        )));
    }
    let n_train = (train_frac * n as f64).round() as usize;
    let n_val = (val_frac * n as f64).round() as usize;
    let n_vul = (vul_frac * n as f64).round() as usize;
    if n_train + n_val > n {
        return Err(Error::Config("split sizes exceed node count".into()));
    }
    let pool_size = n - n_train - n_val;
    if n_vul > pool_size {
        return Err(Error::Config(format!(
            "{n_vul} vulnerable nodes requested but the test pool has {pool_size}"
        )));
    }

    let mut rng = rng::substream(seed, Domain::Split, 0);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut train = order[..n_train].to_vec();
    let mut validation = order[n_train..n_train + n_val].to_vec();
    let mut test_pool = order[n_train + n_val..].to_vec();
    let mut vulnerable = test_pool.iter().copied().choose_multiple(&mut rng, n_vul);
    train.sort_unstable();
    validation.sort_unstable();
    test_pool.sort_unstable();
    vulnerable.sort_unstable();
    Ok(SplitSpec {
        train,
        validation,
        test_pool,
        vulnerable,
    })
}

/// `count` seeded subsets of the test pool, each of size `round(ratio·|pool|)`.
pub fn sample_test_sets(
    split: &SplitSpec,
    ratio: f64,
    count: usize,
    seed: u64,
) -> Result<Vec<Vec<usize>>> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::Config(format!(
            "test-set ratio {ratio} must lie in (0, 1]"
        )));
    }
    if count == 0 {
        return Err(Error::Config("test-set count must be positive".into()));
    }
    let size = (ratio * split.test_pool.len() as f64).round() as usize;
    Ok((0..count)
        .map(|i| {
            let mut rng = rng::substream(seed, Domain::TestSets, i as u64);
            let mut set = split
                .test_pool
                .iter()
                .copied()
                .choose_multiple(&mut rng, size);
            set.sort_unstable();
            set
        })
        .collect())
}

/// Symmetrized adjacency as a set, used by invariant checks.
pub fn symmetric_closure(g: &Graph) -> BTreeSet<(usize, usize)> {
    g.edges().flat_map(|(u, v)| [(u, v), (v, u)]).collect()
}

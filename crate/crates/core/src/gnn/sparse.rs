use ndarray::{Array2, ArrayView2};

use crate::graph::Graph;

/// Square sparse operator in CSR layout.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseOperator {
    n: usize,
    indptr: Vec<usize>,
    indices: Vec<u32>,
    values: Vec<f64>,
}

impl SparseOperator {
    fn from_rows(n: usize, rows: Vec<Vec<(u32, f64)>>) -> Self {
        let mut indptr = Vec::with_capacity(n + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for mut row in rows {
            row.sort_unstable_by_key(|e| e.0);
            for (j, v) in row {
                indices.push(j);
                values.push(v);
            }
            indptr.push(indices.len());
        }
        SparseOperator {
            n,
            indptr,
            indices,
            values,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Nonzeros of row `i` as `(column, value)`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.indptr[i]..self.indptr[i + 1];
        self.indices[span.clone()]
            .iter()
            .zip(&self.values[span])
            .map(|(&j, &v)| (j as usize, v))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|&(c, _)| c == j).map_or(0.0, |(_, v)| v)
    }

    /// `self · dense`.
    pub fn matmul(&self, dense: &ArrayView2<'_, f64>) -> Array2<f64> {
        assert_eq!(dense.nrows(), self.n, "sparse matmul row mismatch");
        let cols = dense.ncols();
        let mut out = Array2::<f64>::zeros((self.n, cols));
        for (i, mut out_row) in out.rows_mut().into_iter().enumerate() {
            for (j, v) in self.row(i) {
                out_row.scaled_add(v, &dense.row(j));
            }
        }
        out
    }

    pub fn transpose(&self) -> SparseOperator {
        let mut rows: Vec<Vec<(u32, f64)>> = vec![Vec::new(); self.n];
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                rows[j].push((i as u32, v));
            }
        }
        SparseOperator::from_rows(self.n, rows)
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.n, self.n));
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                out[[i, j]] = v;
            }
        }
        out
    }
}

/// Symmetric GCN propagation `D̃^{-1/2} (A + I) D̃^{-1/2}`.
pub fn normalize_adjacency(g: &Graph) -> SparseOperator {
    let n = g.num_nodes();
    let inv_sqrt: Vec<f64> = g
        .degrees()
        .into_iter()
        .map(|d| 1.0 / ((d + 1) as f64).sqrt())
        .collect();
    let mut rows: Vec<Vec<(u32, f64)>> = (0..n)
        .map(|i| vec![(i as u32, inv_sqrt[i] * inv_sqrt[i])])
        .collect();
    for (u, v) in g.edges() {
        let w = inv_sqrt[u] * inv_sqrt[v];
        rows[u].push((v as u32, w));
        rows[v].push((u as u32, w));
    }
    SparseOperator::from_rows(n, rows)
}

/// Neighbor-mean aggregation `D^{-1} A`; isolated nodes get an empty row.
pub fn mean_aggregator(g: &Graph) -> SparseOperator {
    let n = g.num_nodes();
    let deg = g.degrees();
    let mut rows: Vec<Vec<(u32, f64)>> = vec![Vec::new(); n];
    for (u, v) in g.edges() {
        rows[u].push((v as u32, 1.0 / deg[u] as f64));
        rows[v].push((u as u32, 1.0 / deg[v] as f64));
    }
    SparseOperator::from_rows(n, rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn isolated_node_is_one() {
        let a = normalize_adjacency(&Graph::empty(1));
        assert_eq!(a.to_dense()[[0, 0]], 1.0);
    }

    #[test]
    fn single_edge_is_half_everywhere() {
        let g = Graph::from_pairs(2, vec![(0, 1)]).unwrap();
        let a = normalize_adjacency(&g).to_dense();
        for v in a.iter() {
            assert_abs_diff_eq!(*v, 0.5, epsilon = 1e-15);
        }
    }

    #[test]
    fn path_graph_entry() {
        let g = Graph::from_pairs(3, vec![(0, 1), (1, 2)]).unwrap();
        let a = normalize_adjacency(&g);
        assert_abs_diff_eq!(a.get(0, 1), 1.0 / 6f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(a.get(1, 1), 1.0 / 3.0, epsilon = 1e-15);
        let dense = a.to_dense();
        assert_eq!(dense, dense.t());
        assert_eq!(a.transpose(), a);
    }

    #[test]
    fn mean_rows_sum_to_one() {
        let g = Graph::from_pairs(4, vec![(0, 1), (0, 2), (1, 2)]).unwrap();
        let m = mean_aggregator(&g).to_dense();
        for i in 0..3 {
            assert_abs_diff_eq!(m.row(i).sum(), 1.0, epsilon = 1e-15);
        }
        assert_eq!(m.row(3).sum(), 0.0);
    }
}

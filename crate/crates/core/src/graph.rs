//! Compressed-sparse-row graphs and the sparse operators built on them.
//!
//! Row `i` of the adjacency stores the out-edges of node `i`, so the matrix
//! product `A * M` aggregates, for every node, the rows of `M` found at its
//! stored neighbors. Column indices are strictly increasing within a row.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::dense::Matrix;
use crate::error::{Error, Result};

const PAR_ROWS: usize = 256;

/// Weighted adjacency in CSR form.
#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    num_nodes: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
    directed: bool,
}

impl Graph {
    /// Graph with `n` nodes and no edges.
    pub fn empty(n: usize, directed: bool) -> Self {
        Self {
            num_nodes: n,
            row_offsets: vec![0; n + 1],
            col_indices: Vec::new(),
            values: Vec::new(),
            directed,
        }
    }

    /// Identity operator: a unit self-loop on every node.
    pub fn identity(n: usize) -> Self {
        Self {
            num_nodes: n,
            row_offsets: (0..=n).collect(),
            col_indices: (0..n).collect(),
            values: vec![1.0; n],
            directed: false,
        }
    }

    /// Builds a graph from `(src, dst, weight)` triples.
    ///
    /// Repeated `(src, dst)` pairs keep the first occurrence; the number of
    /// dropped duplicates is returned alongside the graph. With
    /// `directed = false` the edge list must already be symmetric.
    pub fn from_edges_counting<I>(n: usize, edges: I, directed: bool) -> Result<(Self, usize)>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        let mut list: Vec<(usize, usize, f64)> = Vec::new();
        for (s, d, w) in edges {
            if s >= n || d >= n {
                return Err(Error::NodeOutOfRange {
                    node: s.max(d),
                    num_nodes: n,
                });
            }
            list.push((s, d, w));
        }
        // stable: equal keys keep input order, so dedup retains the first
        list.sort_by_key(|&(s, d, _)| (s, d));
        let before = list.len();
        list.dedup_by_key(|&mut (s, d, _)| (s, d));
        let duplicates = before - list.len();

        let mut row_offsets = vec![0usize; n + 1];
        for &(s, _, _) in &list {
            row_offsets[s + 1] += 1;
        }
        for i in 0..n {
            row_offsets[i + 1] += row_offsets[i];
        }
        let graph = Self {
            num_nodes: n,
            row_offsets,
            col_indices: list.iter().map(|e| e.1).collect(),
            values: list.iter().map(|e| e.2).collect(),
            directed,
        };
        if !directed && !graph.is_symmetric() {
            return Err(Error::InvalidGraph(
                "undirected graph requested from an asymmetric edge list".into(),
            ));
        }
        Ok((graph, duplicates))
    }

    pub fn from_edges<I>(n: usize, edges: I, directed: bool) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        Self::from_edges_counting(n, edges, directed).map(|(g, _)| g)
    }

    /// Unit-weight directed graph from `(src, dst)` pairs.
    pub fn from_pairs(n: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        Self::from_edges(n, pairs.iter().map(|&(s, d)| (s, d, 1.0)), true)
    }

    /// Wraps raw CSR arrays after checking every structural invariant.
    pub fn from_csr(
        num_nodes: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        values: Vec<f64>,
        directed: bool,
    ) -> Result<Self> {
        if row_offsets.len() != num_nodes + 1 {
            return Err(Error::InvalidGraph(format!(
                "row_offsets has length {}, expected {}",
                row_offsets.len(),
                num_nodes + 1
            )));
        }
        if row_offsets[0] != 0 || row_offsets.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::InvalidGraph("row_offsets must start at 0 and be nondecreasing".into()));
        }
        if row_offsets[num_nodes] != col_indices.len() || col_indices.len() != values.len() {
            return Err(Error::InvalidGraph("CSR array lengths disagree".into()));
        }
        for i in 0..num_nodes {
            let row = &col_indices[row_offsets[i]..row_offsets[i + 1]];
            if row.iter().any(|&c| c >= num_nodes) {
                return Err(Error::InvalidGraph(format!("row {i} has an out-of-range column")));
            }
            if row.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidGraph(format!(
                    "row {i} column indices are not strictly increasing"
                )));
            }
        }
        let g = Self {
            num_nodes,
            row_offsets,
            col_indices,
            values,
            directed,
        };
        if !directed && !g.is_symmetric() {
            return Err(Error::InvalidGraph("graph flagged undirected is not symmetric".into()));
        }
        Ok(g)
    }

    #[inline]
    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    /// Number of stored (directed) entries.
    #[inline]
    pub fn num_edges(&self) -> usize {
        self.col_indices.len()
    }

    #[inline]
    pub fn is_directed(&self) -> bool {
        self.directed
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.col_indices[self.row_offsets[i]..self.row_offsets[i + 1]]
    }

    #[inline]
    pub fn weights(&self, i: usize) -> &[f64] {
        &self.values[self.row_offsets[i]..self.row_offsets[i + 1]]
    }

    #[inline]
    pub fn out_degree(&self, i: usize) -> usize {
        self.row_offsets[i + 1] - self.row_offsets[i]
    }

    /// Iterates `(src, dst, weight)` in row-major order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.num_nodes).flat_map(move |i| {
            self.neighbors(i)
                .iter()
                .zip(self.weights(i))
                .map(move |(&j, &w)| (i, j, w))
        })
    }

    pub fn weight(&self, i: usize, j: usize) -> Option<f64> {
        let row = self.neighbors(i);
        row.binary_search(&j).ok().map(|k| self.weights(i)[k])
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.neighbors(i).binary_search(&j).is_ok()
    }

    pub fn is_symmetric(&self) -> bool {
        self.edges().all(|(i, j, w)| self.weight(j, i) == Some(w))
    }

    /// Union of the edge set with its reverse. A pair stored in both
    /// directions takes the larger of its two weights.
    pub fn to_undirected(&self) -> Graph {
        let mut both: Vec<(usize, usize, f64)> = Vec::with_capacity(2 * self.num_edges());
        for (i, j, w) in self.edges() {
            both.push((i, j, w));
            if i != j {
                both.push((j, i, w));
            }
        }
        both.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)).then(b.2.total_cmp(&a.2)));
        both.dedup_by_key(|&mut (s, d, _)| (s, d));
        Self::from_edges(self.num_nodes, both, true)
            .map(|mut g| {
                g.directed = false;
                g
            })
            .expect("indices come from a valid graph")
    }

    /// The same structure with every weight set to 1 and self-loops removed.
    pub fn simple(&self) -> Graph {
        let edges = self
            .edges()
            .filter(|&(i, j, _)| i != j)
            .map(|(i, j, _)| (i, j, 1.0));
        let mut g = Self::from_edges(self.num_nodes, edges, true).expect("valid indices");
        g.directed = self.directed;
        g
    }

    /// Graph with every edge reversed.
    pub fn transpose(&self) -> Graph {
        let edges = self.edges().map(|(i, j, w)| (j, i, w));
        let mut g = Self::from_edges(self.num_nodes, edges, true).expect("valid indices");
        g.directed = self.directed;
        g
    }

    /// `D^{-1/2} (I + A) D^{-1/2}` with `D = diag((I + A) 1)`.
    ///
    /// Every node receives a unit self-loop before normalization (added to an
    /// existing one if present), so no degree is zero.
    pub fn sym_normalized_adjacency(&self) -> Graph {
        let n = self.num_nodes;
        let mut edges = Vec::with_capacity(self.num_edges() + n);
        for i in 0..n {
            let mut self_added = false;
            for (&j, &w) in self.neighbors(i).iter().zip(self.weights(i)) {
                if j == i {
                    edges.push((i, j, w + 1.0));
                    self_added = true;
                } else {
                    edges.push((i, j, w));
                }
            }
            if !self_added {
                edges.push((i, i, 1.0));
            }
        }
        let mut degree = vec![0.0; n];
        for &(i, _, w) in &edges {
            degree[i] += w;
        }
        let inv_sqrt: Vec<f64> = degree
            .iter()
            .map(|&d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 })
            .collect();
        let normalized = edges
            .into_iter()
            .map(|(i, j, w)| (i, j, w * (inv_sqrt[i] * inv_sqrt[j])));
        let mut g = Self::from_edges(n, normalized, true).expect("valid indices");
        g.directed = self.directed;
        g
    }

    /// Each row divided by its sum; rows summing to zero stay zero.
    pub fn row_normalized_adjacency(&self) -> Graph {
        let mut values = self.values.clone();
        for i in 0..self.num_nodes {
            let range = self.row_offsets[i]..self.row_offsets[i + 1];
            let sum: f64 = self.values[range.clone()].iter().sum();
            if sum != 0.0 {
                for v in &mut values[range] {
                    *v /= sum;
                }
            } else {
                for v in &mut values[range] {
                    *v = 0.0;
                }
            }
        }
        Self {
            values,
            ..self.clone()
        }
    }

    /// Sparse-dense product `A * M`.
    pub fn spmm(&self, m: &Matrix) -> Result<Matrix> {
        if m.rows() != self.num_nodes {
            return Err(Error::DimensionMismatch {
                context: "spmm (graph nodes vs matrix rows)".into(),
                expected: self.num_nodes,
                found: m.rows(),
            });
        }
        let cols = m.cols();
        let mut out = Matrix::zeros(self.num_nodes, cols);
        if cols == 0 {
            return Ok(out);
        }
        let kernel = |(i, out_row): (usize, &mut [f64])| {
            for (&j, &w) in self.neighbors(i).iter().zip(self.weights(i)) {
                for (o, &x) in out_row.iter_mut().zip(m.row(j)) {
                    *o += w * x;
                }
            }
        };
        if self.num_nodes >= PAR_ROWS {
            out.data_mut().par_chunks_mut(cols).enumerate().for_each(kernel);
        } else {
            out.data_mut().chunks_mut(cols).enumerate().for_each(kernel);
        }
        Ok(out)
    }

    /// Transposed product `A^T * M`, computed by scattering along rows.
    pub fn spmm_transpose(&self, m: &Matrix) -> Result<Matrix> {
        if m.rows() != self.num_nodes {
            return Err(Error::DimensionMismatch {
                context: "spmm_transpose (graph nodes vs matrix rows)".into(),
                expected: self.num_nodes,
                found: m.rows(),
            });
        }
        let mut out = Matrix::zeros(self.num_nodes, m.cols());
        for i in 0..self.num_nodes {
            let src = m.row(i);
            for (&j, &w) in self.neighbors(i).iter().zip(self.weights(i)) {
                for (o, &x) in out.row_mut(j).iter_mut().zip(src) {
                    *o += w * x;
                }
            }
        }
        Ok(out)
    }

    /// Dense copy of the adjacency; intended for small graphs and tests.
    pub fn to_dense(&self) -> Matrix {
        let mut m = Matrix::zeros(self.num_nodes, self.num_nodes);
        for (i, j, w) in self.edges() {
            m.set(i, j, w);
        }
        m
    }

    /// Writes the graph as a tab-separated edge list (`src dst weight`).
    pub fn write_edge_file(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let write = |w: &mut BufWriter<File>| -> std::io::Result<()> {
            writeln!(w, "# nodes={} edges={}", self.num_nodes, self.num_edges())?;
            for (i, j, weight) in self.edges() {
                if weight == 1.0 {
                    writeln!(w, "{i}\t{j}")?;
                } else {
                    writeln!(w, "{i}\t{j}\t{weight}")?;
                }
            }
            w.flush()
        };
        write(&mut w).map_err(|e| Error::io(path, e))
    }
}

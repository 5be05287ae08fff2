//! Exact k-nearest-neighbor graphs under Euclidean distance.
//!
//! Neighbors are ranked by `(distance, node id)`, so ties go to the smaller
//! id and the result is the same for any thread count.

use std::cmp::Ordering;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dense::{FeatureMatrix, Matrix};
use crate::error::{Error, Result};
use crate::graph::Graph;

/// Which feature matrix a KNN graph was built from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KnnSource {
    Feat,
    Role,
    Global,
}

impl KnnSource {
    pub fn label(self) -> &'static str {
        match self {
            KnnSource::Feat => "Feats",
            KnnSource::Role => "Role",
            KnnSource::Global => "Global",
        }
    }

    fn file_stem(self) -> &'static str {
        match self {
            KnnSource::Feat => "feat",
            KnnSource::Role => "role",
            KnnSource::Global => "global",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnnConfig {
    pub k: usize,
    pub symmetrize: bool,
    pub source: KnnSource,
}

impl KnnConfig {
    pub fn new(k: usize, source: KnnSource) -> Self {
        Self {
            k,
            symmetrize: true,
            source,
        }
    }

    /// Display name, e.g. `KNN-Global-3`.
    pub fn name(&self) -> String {
        format!("KNN-{}-{}", self.source.label(), self.k)
    }

    /// Edge-file name, e.g. `knn-global-3.tsv`.
    pub fn file_name(&self) -> String {
        format!("knn-{}-{}.tsv", self.source.file_stem(), self.k)
    }
}

impl fmt::Display for KnnConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

fn check_finite(z: &FeatureMatrix) -> Result<()> {
    if !z.all_finite() {
        return Err(Error::NonFinite("feature matrix".into()));
    }
    Ok(())
}

/// Squared distance accumulated in column order; zero coordinates on both
/// sides contribute exactly zero, so sparse rows agree bit-for-bit with the
/// dense sum.
#[inline]
fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Row as `(column, value)` pairs of its nonzero entries.
fn sparse_rows(z: &FeatureMatrix) -> Vec<Vec<(usize, f64)>> {
    (0..z.rows())
        .map(|r| {
            z.row(r)
                .iter()
                .enumerate()
                .filter(|(_, &v)| v != 0.0)
                .map(|(c, &v)| (c, v))
                .collect()
        })
        .collect()
}

/// Squared distance over the union of supports, in column order.
fn sparse_squared_distance(a: &[(usize, f64)], b: &[(usize, f64)]) -> f64 {
    let (mut i, mut j) = (0, 0);
    let mut acc = 0.0;
    while i < a.len() || j < b.len() {
        let d = match (a.get(i), b.get(j)) {
            (Some(&(ca, va)), Some(&(cb, vb))) => match ca.cmp(&cb) {
                Ordering::Less => {
                    i += 1;
                    va
                }
                Ordering::Greater => {
                    j += 1;
                    -vb
                }
                Ordering::Equal => {
                    i += 1;
                    j += 1;
                    va - vb
                }
            },
            (Some(&(_, va)), None) => {
                i += 1;
                va
            }
            (None, Some(&(_, vb))) => {
                j += 1;
                -vb
            }
            (None, None) => unreachable!(),
        };
        acc += d * d;
    }
    acc
}

/// Full `N x N` Euclidean distance matrix.
pub fn pairwise_euclidean(z: &FeatureMatrix) -> Result<Matrix> {
    let n = z.rows();
    if n < 2 {
        return Err(Error::InvalidConfig(format!(
            "pairwise distances need at least 2 rows, got {n}"
        )));
    }
    check_finite(z)?;
    let mut out = Matrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let d = squared_distance(z.row(i), z.row(j)).sqrt();
            out.set(i, j, d);
            out.set(j, i, d);
        }
    }
    Ok(out)
}

/// Indices of the `k` nearest other rows of every row, nearest first.
pub fn nearest_neighbors(z: &FeatureMatrix, k: usize) -> Result<Vec<Vec<usize>>> {
    let n = z.rows();
    if k == 0 || k + 1 > n {
        return Err(Error::InvalidConfig(format!(
            "k = {k} out of range for {n} nodes (need 1 <= k <= N-1)"
        )));
    }
    check_finite(z)?;
    let density = z.data().iter().filter(|&&v| v != 0.0).count() as f64 / (z.data().len().max(1)) as f64;
    let sparse = (density < 0.25).then(|| sparse_rows(z));
    let by_rank = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));

    Ok((0..n)
        .into_par_iter()
        .map(|i| {
            let mut cand: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| {
                    let d2 = match &sparse {
                        Some(rows) => sparse_squared_distance(&rows[i], &rows[j]),
                        None => squared_distance(z.row(i), z.row(j)),
                    };
                    (d2, j)
                })
                .collect();
            if k < cand.len() {
                cand.select_nth_unstable_by(k - 1, by_rank);
                cand.truncate(k);
            }
            cand.sort_by(by_rank);
            cand.into_iter().map(|(_, j)| j).collect()
        })
        .collect())
}

/// KNN graph: each node points to its `k` nearest other nodes with weight 1,
/// then the union symmetrization is applied when `cfg.symmetrize` is set.
pub fn knn_graph(z: &FeatureMatrix, cfg: &KnnConfig) -> Result<Graph> {
    let neighbors = nearest_neighbors(z, cfg.k)?;
    let edges = neighbors
        .iter()
        .enumerate()
        .flat_map(|(i, nb)| nb.iter().map(move |&j| (i, j, 1.0)));
    let directed = Graph::from_edges(z.rows(), edges, true)?;
    Ok(if cfg.symmetrize {
        directed.to_undirected()
    } else {
        directed
    })
}

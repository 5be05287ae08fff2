//! Label smoothness and homophily of a (graph, labels) pair.

use serde::{Deserialize, Serialize};

use crate::dataset::LabelVector;
use crate::dense::Matrix;
use crate::error::{Error, Result};
use crate::graph::Graph;

/// Shift operator used inside total variation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TvConvention {
    /// The adjacency as stored.
    Raw,
    /// Rows divided by their sums (neighbor average).
    #[default]
    RowNormalized,
    /// `D^{-1/2} (I + A) D^{-1/2}`.
    SymNormalized,
}

/// `||y - A_hat y||_1 / N` with labels used as real-valued class indices.
pub fn total_variation(y: &LabelVector, g: &Graph, convention: TvConvention) -> Result<f64> {
    let n = g.num_nodes();
    if y.len() != n {
        return Err(Error::DimensionMismatch {
            context: "labels vs graph nodes".into(),
            expected: n,
            found: y.len(),
        });
    }
    if n == 0 {
        return Ok(0.0);
    }
    let shift = match convention {
        TvConvention::Raw => g.clone(),
        TvConvention::RowNormalized => g.row_normalized_adjacency(),
        TvConvention::SymNormalized => g.sym_normalized_adjacency(),
    };
    let signal = Matrix::column_vector(y.as_signal());
    let shifted = shift.spmm(&signal)?;
    let l1: f64 = signal
        .data()
        .iter()
        .zip(shifted.data())
        .map(|(a, b)| (a - b).abs())
        .sum();
    Ok(l1 / n as f64)
}

/// Fraction of stored edges whose endpoints share a label. Self-loops are
/// ignored; each stored directed entry counts once.
pub fn edge_homophily(g: &Graph, y: &LabelVector) -> Result<f64> {
    if y.len() != g.num_nodes() {
        return Err(Error::DimensionMismatch {
            context: "labels vs graph nodes".into(),
            expected: g.num_nodes(),
            found: y.len(),
        });
    }
    let (mut same, mut total) = (0usize, 0usize);
    for (i, j, _) in g.edges() {
        if i == j {
            continue;
        }
        total += 1;
        if y.get(i) == y.get(j) {
            same += 1;
        }
    }
    if total == 0 {
        return Err(Error::EdgelessGraph);
    }
    Ok(same as f64 / total as f64)
}

/// Per-node fraction of out-neighbors (self excluded) sharing the node's
/// label; `None` where the neighborhood is empty.
pub fn node_homophily(g: &Graph, y: &LabelVector) -> Result<Vec<Option<f64>>> {
    if y.len() != g.num_nodes() {
        return Err(Error::DimensionMismatch {
            context: "labels vs graph nodes".into(),
            expected: g.num_nodes(),
            found: y.len(),
        });
    }
    Ok((0..g.num_nodes())
        .map(|i| {
            let (mut same, mut total) = (0usize, 0usize);
            for &j in g.neighbors(i) {
                if j == i {
                    continue;
                }
                total += 1;
                if y.get(j) == y.get(i) {
                    same += 1;
                }
            }
            (total > 0).then(|| same as f64 / total as f64)
        })
        .collect())
}

/// Mean over the defined entries; `None` if there are none.
pub fn mean_defined(values: &[Option<f64>]) -> Option<f64> {
    let defined: Vec<f64> = values.iter().flatten().copied().collect();
    (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64)
}

/// Equal-width histogram over `[0, 1]`. Bins are left-closed except the last,
/// which also holds 1.0. Undefined entries are skipped.
pub fn homophily_histogram(values: &[Option<f64>], bins: usize) -> Result<Vec<usize>> {
    if bins == 0 {
        return Err(Error::InvalidConfig("histogram needs at least one bin".into()));
    }
    let mut counts = vec![0; bins];
    for v in values.iter().flatten() {
        if !(0.0..=1.0).contains(v) {
            continue;
        }
        let b = ((v * bins as f64) as usize).min(bins - 1);
        counts[b] += 1;
    }
    Ok(counts)
}

/// Bin edges matching [`homophily_histogram`].
pub fn histogram_edges(bins: usize) -> Vec<(f64, f64)> {
    (0..bins)
        .map(|b| (b as f64 / bins as f64, (b + 1) as f64 / bins as f64))
        .collect()
}

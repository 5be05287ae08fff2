//! Structural node features.
//!
//! Role-based features describe connectivity around a node (degrees,
//! triangles, egonet statistics, core number); global features describe its
//! position in the whole graph (centralities, eccentricity, component size).
//! Everything except in/out degree is computed on the symmetrized graph with
//! self-loops removed and weights ignored.

mod centrality;
mod role;

pub use centrality::{
    betweenness, bfs_distances, connected_components, eigenvector_centrality, pagerank,
    PageRankParams, PowerIterationParams,
};
pub use role::{core_numbers, triangle_counts};

use serde::{Deserialize, Serialize};

use crate::dense::{FeatureMatrix, Matrix};
use crate::error::{Error, Result};
use crate::graph::Graph;

pub const ROLE_FEATURES: &[&str] = &[
    "in_degree",
    "out_degree",
    "total_degree",
    "triangle_count",
    "local_clustering_coefficient",
    "egonet_edge_count",
    "egonet_size",
    "average_neighbor_degree",
    "two_hop_neighborhood_size",
    "core_number",
];

pub const GLOBAL_FEATURES: &[&str] = &[
    "pagerank",
    "harmonic_closeness",
    "betweenness",
    "eigenvector_centrality",
    "eccentricity",
    "component_size",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Role,
    Global,
}

/// Which structural features to compute and whether to standardize them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub kind: FeatureKind,
    pub selected: Vec<String>,
    #[serde(default = "default_true")]
    pub standardize: bool,
}

fn default_true() -> bool {
    true
}

impl FeatureSpec {
    /// The full catalog of `kind`, standardized.
    pub fn all(kind: FeatureKind) -> Self {
        let names = match kind {
            FeatureKind::Role => ROLE_FEATURES,
            FeatureKind::Global => GLOBAL_FEATURES,
        };
        Self {
            kind,
            selected: names.iter().map(|s| s.to_string()).collect(),
            standardize: true,
        }
    }

    pub fn validate(&self, expected: FeatureKind) -> Result<()> {
        if self.kind != expected {
            return Err(Error::InvalidConfig(format!(
                "feature spec of kind {:?} passed where {:?} is required",
                self.kind, expected
            )));
        }
        if self.selected.is_empty() {
            return Err(Error::InvalidConfig("feature selection is empty".into()));
        }
        let (catalog, kind) = match self.kind {
            FeatureKind::Role => (ROLE_FEATURES, "role"),
            FeatureKind::Global => (GLOBAL_FEATURES, "global"),
        };
        for name in &self.selected {
            if !catalog.contains(&name.as_str()) {
                return Err(Error::UnknownFeature {
                    kind,
                    name: name.clone(),
                });
            }
        }
        Ok(())
    }
}

/// A computed feature matrix with its column names and any diagnostics
/// raised while computing it (for example a power-iteration fallback).
#[derive(Clone, Debug)]
pub struct StructuralFeatures {
    pub names: Vec<String>,
    pub matrix: FeatureMatrix,
    pub notes: Vec<String>,
}

fn assemble(g: &Graph, columns: Vec<(String, Vec<f64>)>, standardize_cols: bool, notes: Vec<String>) -> StructuralFeatures {
    let n = g.num_nodes();
    let mut m = Matrix::zeros(n, columns.len());
    for (c, (_, col)) in columns.iter().enumerate() {
        for (r, &v) in col.iter().enumerate() {
            m.set(r, c, v);
        }
    }
    let matrix = if standardize_cols { standardize(&m) } else { m };
    StructuralFeatures {
        names: columns.into_iter().map(|(name, _)| name).collect(),
        matrix,
        notes,
    }
}

/// Role-based features, one column per selected name in selection order.
pub fn role_features(g: &Graph, spec: &FeatureSpec) -> Result<StructuralFeatures> {
    spec.validate(FeatureKind::Role)?;
    let directed = g.simple();
    let und = g.to_undirected().simple();
    let stats = role::RoleStats::compute(&directed, &und, &spec.selected);
    let columns = spec
        .selected
        .iter()
        .map(|name| (name.clone(), stats.column(name)))
        .collect();
    Ok(assemble(g, columns, spec.standardize, Vec::new()))
}

/// Global features, one column per selected name in selection order.
pub fn global_features(g: &Graph, spec: &FeatureSpec) -> Result<StructuralFeatures> {
    spec.validate(FeatureKind::Global)?;
    let und = g.to_undirected().simple();
    let mut notes = Vec::new();
    let wants = |name: &str| spec.selected.iter().any(|s| s == name);

    let distance_stats = if wants("harmonic_closeness") || wants("eccentricity") {
        Some(centrality::distance_stats(&und))
    } else {
        None
    };
    let components = connected_components(&und);

    let mut columns = Vec::with_capacity(spec.selected.len());
    for name in &spec.selected {
        let col = match name.as_str() {
            "pagerank" => pagerank(&und, &PageRankParams::default()),
            "harmonic_closeness" => distance_stats.as_ref().expect("computed above").harmonic.clone(),
            "betweenness" => betweenness(&und),
            "eigenvector_centrality" => {
                match eigenvector_centrality(&und, &PowerIterationParams::default()) {
                    Some(v) => v,
                    None => {
                        notes.push(
                            "eigenvector_centrality did not converge within the iteration cap; \
                             column replaced by degree"
                                .to_string(),
                        );
                        log::warn!("eigenvector centrality did not converge, using degree fallback");
                        (0..und.num_nodes()).map(|i| und.out_degree(i) as f64).collect()
                    }
                }
            }
            "eccentricity" => distance_stats.as_ref().expect("computed above").eccentricity.clone(),
            "component_size" => {
                let mut sizes = vec![0usize; und.num_nodes()];
                for &c in &components {
                    sizes[c] += 1;
                }
                components.iter().map(|&c| sizes[c] as f64).collect()
            }
            _ => unreachable!("validated"),
        };
        columns.push((name.clone(), col));
    }
    Ok(assemble(g, columns, spec.standardize, notes))
}

/// Shifts every column to mean 0 and scales it to unit population standard
/// deviation. Constant columns become all-zero.
pub fn standardize(z: &FeatureMatrix) -> FeatureMatrix {
    let (n, f) = z.shape();
    let mut out = Matrix::zeros(n, f);
    if n == 0 {
        return out;
    }
    for c in 0..f {
        let col = z.column(c);
        let mean = col.iter().sum::<f64>() / n as f64;
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        let sd = var.sqrt();
        if sd <= 1e-12 * mean.abs().max(1.0) {
            continue;
        }
        for (r, v) in col.iter().enumerate() {
            out.set(r, c, (v - mean) / sd);
        }
    }
    out
}

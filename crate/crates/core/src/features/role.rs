use std::sync::atomic::{AtomicU64, Ordering};

use rayon::prelude::*;

use crate::graph::Graph;

/// Per-node triangle counts of a simple undirected graph.
///
/// Edges are oriented from lower to higher (degree, id) rank so each
/// triangle is found exactly once, then credited to its three corners.
pub fn triangle_counts(g: &Graph) -> Vec<u64> {
    let n = g.num_nodes();
    let rank_less = |a: usize, b: usize| (g.out_degree(a), a) < (g.out_degree(b), b);
    let forward: Vec<Vec<usize>> = (0..n)
        .map(|u| g.neighbors(u).iter().copied().filter(|&v| rank_less(u, v)).collect())
        .collect();
    let counts: Vec<AtomicU64> = (0..n).map(|_| AtomicU64::new(0)).collect();
    (0..n).into_par_iter().for_each(|u| {
        let fu = &forward[u];
        for &v in fu {
            let fv = &forward[v];
            let (mut a, mut b) = (0, 0);
            while a < fu.len() && b < fv.len() {
                match fu[a].cmp(&fv[b]) {
                    std::cmp::Ordering::Less => a += 1,
                    std::cmp::Ordering::Greater => b += 1,
                    std::cmp::Ordering::Equal => {
                        let w = fu[a];
                        counts[u].fetch_add(1, Ordering::Relaxed);
                        counts[v].fetch_add(1, Ordering::Relaxed);
                        counts[w].fetch_add(1, Ordering::Relaxed);
                        a += 1;
                        b += 1;
                    }
                }
            }
        }
    });
    counts.into_iter().map(AtomicU64::into_inner).collect()
}

/// k-core number of every node (bucket-based peeling).
pub fn core_numbers(g: &Graph) -> Vec<usize> {
    let n = g.num_nodes();
    let mut degree: Vec<usize> = (0..n).map(|i| g.out_degree(i)).collect();
    let max_deg = degree.iter().copied().max().unwrap_or(0);
    let mut bin = vec![0usize; max_deg + 1];
    for &d in &degree {
        bin[d] += 1;
    }
    let mut start = 0;
    for b in bin.iter_mut() {
        let count = *b;
        *b = start;
        start += count;
    }
    let mut pos = vec![0usize; n];
    let mut vert = vec![0usize; n];
    for v in 0..n {
        pos[v] = bin[degree[v]];
        vert[pos[v]] = v;
        bin[degree[v]] += 1;
    }
    for d in (1..=max_deg).rev() {
        bin[d] = bin[d - 1];
    }
    bin[0] = 0;
    for i in 0..n {
        let v = vert[i];
        for &u in g.neighbors(v) {
            if degree[u] > degree[v] {
                let du = degree[u];
                let pu = pos[u];
                let pw = bin[du];
                let w = vert[pw];
                if u != w {
                    pos[u] = pw;
                    vert[pu] = w;
                    pos[w] = pu;
                    vert[pw] = u;
                }
                bin[du] += 1;
                degree[u] -= 1;
            }
        }
    }
    degree
}

/// Lazily computed role statistics shared by the feature columns.
pub(super) struct RoleStats {
    in_degree: Vec<f64>,
    out_degree: Vec<f64>,
    degree: Vec<f64>,
    triangles: Option<Vec<u64>>,
    avg_neighbor_degree: Vec<f64>,
    two_hop: Option<Vec<usize>>,
    core: Option<Vec<usize>>,
}

impl RoleStats {
    /// `directed` and `und` must both be simple (no self-loops, unit weights).
    pub(super) fn compute(directed: &Graph, und: &Graph, selected: &[String]) -> Self {
        let n = und.num_nodes();
        let wants = |names: &[&str]| selected.iter().any(|s| names.contains(&s.as_str()));
        let mut in_degree = vec![0.0; n];
        for (_, j, _) in directed.edges() {
            in_degree[j] += 1.0;
        }
        let out_degree = (0..n).map(|i| directed.out_degree(i) as f64).collect();
        let degree: Vec<f64> = (0..n).map(|i| und.out_degree(i) as f64).collect();
        let avg_neighbor_degree = (0..n)
            .map(|i| {
                let nb = und.neighbors(i);
                if nb.is_empty() {
                    0.0
                } else {
                    nb.iter().map(|&j| degree[j]).sum::<f64>() / nb.len() as f64
                }
            })
            .collect();
        let triangles = wants(&["triangle_count", "local_clustering_coefficient", "egonet_edge_count"])
            .then(|| triangle_counts(und));
        let two_hop = wants(&["two_hop_neighborhood_size"]).then(|| two_hop_sizes(und));
        let core = wants(&["core_number"]).then(|| core_numbers(und));
        Self {
            in_degree,
            out_degree,
            degree,
            triangles,
            avg_neighbor_degree,
            two_hop,
            core,
        }
    }

    pub(super) fn column(&self, name: &str) -> Vec<f64> {
        let tri = || self.triangles.as_ref().expect("triangles requested");
        match name {
            "in_degree" => self.in_degree.clone(),
            "out_degree" => self.out_degree.clone(),
            "total_degree" => self.degree.clone(),
            "triangle_count" => tri().iter().map(|&t| t as f64).collect(),
            "local_clustering_coefficient" => tri()
                .iter()
                .zip(&self.degree)
                .map(|(&t, &d)| if d < 2.0 { 0.0 } else { 2.0 * t as f64 / (d * (d - 1.0)) })
                .collect(),
            "egonet_edge_count" => tri().iter().zip(&self.degree).map(|(&t, &d)| d + t as f64).collect(),
            "egonet_size" => self.degree.iter().map(|d| d + 1.0).collect(),
            "average_neighbor_degree" => self.avg_neighbor_degree.clone(),
            "two_hop_neighborhood_size" => {
                self.two_hop.as_ref().expect("requested").iter().map(|&v| v as f64).collect()
            }
            "core_number" => self.core.as_ref().expect("requested").iter().map(|&v| v as f64).collect(),
            other => unreachable!("unvalidated role feature {other}"),
        }
    }
}

/// Number of nodes at distance 1 or 2 from each node.
fn two_hop_sizes(g: &Graph) -> Vec<usize> {
    let n = g.num_nodes();
    (0..n)
        .into_par_iter()
        .map_init(
            || vec![usize::MAX; n],
            |stamp, u| {
                stamp[u] = u;
                let mut count = 0;
                for &v in g.neighbors(u) {
                    if stamp[v] != u {
                        stamp[v] = u;
                        count += 1;
                    }
                }
                for &v in g.neighbors(u) {
                    for &w in g.neighbors(v) {
                        if stamp[w] != u {
                            stamp[w] = u;
                            count += 1;
                        }
                    }
                }
                count
            },
        )
        .collect()
}

//! Oracle comparisons over many random instances. Each function panics on
//! the first mismatch.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use sggnn::dense::Matrix;
use sggnn::features::{betweenness, bfs_distances, core_numbers, pagerank, triangle_counts, PageRankParams};
use sggnn::graph::Graph;
use sggnn::knn::{knn_graph, nearest_neighbors, pairwise_euclidean, KnnConfig, KnnSource};
use sggnn::models::{AlphaMode, BranchConfig, FbGcnConfig, GcnConfig, Model, ModelConfig, Propagation, SgGnnConfig};

use super::*;

pub fn spmm_matches_dense(seeds: u64) {
    for seed in 0..seeds {
        let mut r = rng(seed);
        let n = r.gen_range(1..=30);
        let param = r.gen_range(0.0..0.4);
        let g = random_weighted_digraph(&mut r, n, param);
        let param = r.gen_range(1..5);
        let x = random_matrix(&mut r, n, param);
        let a = dense_adjacency(&g);
        let got = g.spmm(&x).unwrap();
        assert!(got.max_abs_diff(&dense_matmul(&a, &x)) <= 1e-12, "seed {seed}");

        let at: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| a[j][i]).collect()).collect();
        let got_t = g.spmm_transpose(&x).unwrap();
        assert!(got_t.max_abs_diff(&dense_matmul(&at, &x)) <= 1e-12, "seed {seed}");
    }
}

pub fn normalized_adjacency_matches_dense(seeds: u64) {
    for seed in 0..seeds {
        let mut r = rng(seed);
        let n = r.gen_range(1..=30);
        let param = r.gen_range(0.0..0.4);
        let g = random_simple_graph(&mut r, n, param);
        let a = dense_adjacency(&g);
        let deg: Vec<f64> = (0..n).map(|i| 1.0 + a[i].iter().sum::<f64>()).collect();
        let s = g.sym_normalized_adjacency();
        for i in 0..n {
            for j in 0..n {
                let tilde = a[i][j] + if i == j { 1.0 } else { 0.0 };
                let expect = tilde / (deg[i] * deg[j]).sqrt();
                let got = s.weight(i, j).unwrap_or(0.0);
                assert!((got - expect).abs() <= 1e-12, "seed {seed} ({i},{j})");
            }
        }
    }
}

pub fn triangles_match_cube_diagonal(seeds: u64) {
    for seed in 0..seeds {
        let mut r = rng(seed);
        let n = r.gen_range(1..=30);
        let param = r.gen_range(0.0..0.6);
        let g = random_simple_graph(&mut r, n, param);
        assert_eq!(triangle_counts(&g), triangles_oracle(&g), "seed {seed}");
    }
}

pub fn distances_match_floyd_warshall(seeds: u64) {
    for seed in 0..seeds {
        let mut r = rng(seed);
        let n = r.gen_range(1..=30);
        let param = r.gen_range(0.0..0.3);
        let g = random_simple_graph(&mut r, n, param);
        let fw = floyd_warshall(&g);
        for s in 0..n {
            assert_eq!(bfs_distances(&g, s), fw[s], "seed {seed} source {s}");
        }
    }
}

pub fn betweenness_matches_path_counting(seeds: u64) {
    for seed in 0..seeds {
        let mut r = rng(seed);
        let n = r.gen_range(1..=30);
        let param = r.gen_range(0.05..0.4);
        let g = random_simple_graph(&mut r, n, param);
        let got = betweenness(&g);
        let expect = betweenness_oracle(&g);
        for v in 0..n {
            assert!(
                (got[v] - expect[v]).abs() <= 1e-12 * expect[v].abs().max(1.0),
                "seed {seed} node {v}: {} vs {}",
                got[v],
                expect[v]
            );
        }
    }
}

pub fn core_numbers_match_peeling(seeds: u64) {
    for seed in 0..seeds {
        let mut r = rng(seed);
        let n = r.gen_range(1..=30);
        let param = r.gen_range(0.0..0.5);
        let g = random_simple_graph(&mut r, n, param);
        assert_eq!(core_numbers(&g), core_numbers_oracle(&g), "seed {seed}");
    }
}

pub fn pagerank_matches_dense_power_iteration(seeds: u64) {
    for seed in 0..seeds {
        let mut r = rng(seed);
        let n = r.gen_range(2..=30);
        let param = r.gen_range(0.0..0.3);
        let g = random_simple_graph(&mut r, n, param);
        let got = pagerank(&g, &PageRankParams::default());
        let expect = pagerank_oracle(&g, 0.85, 300);
        for v in 0..n {
            assert!((got[v] - expect[v]).abs() < 1e-9, "seed {seed} node {v}");
        }
        assert!((got.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}

pub fn pairwise_distances_match(seeds: u64) {
    for seed in 0..seeds {
        let mut r = rng(seed);
        let n = r.gen_range(2..=30);
        let param = r.gen_range(1..6);
        let z = random_matrix(&mut r, n, param);
        let got = pairwise_euclidean(&z).unwrap();
        let expect = euclidean_oracle(&z);
        for i in 0..n {
            for j in 0..n {
                assert!((got.get(i, j) - expect[i][j]).abs() <= 1e-12, "seed {seed}");
            }
        }
    }
}

pub fn knn_neighbor_sets_match_full_sort(seeds: u64) {
    for seed in 0..seeds {
        let mut r = rng(seed);
        let n = r.gen_range(2..=30);
        let k = r.gen_range(1..n);
        // integer grid points: plenty of exact ties
        let param = r.gen_range(1..4);
        let z = random_grid_points(&mut r, n, param);
        assert_eq!(nearest_neighbors(&z, k).unwrap(), knn_oracle(&z, k), "seed {seed} k {k}");

        // sparse rows take the merge-based distance path
        let mut sparse = Matrix::zeros(n, 12);
        for i in 0..n {
            sparse.set(i, r.gen_range(0..12), r.gen_range(1..3) as f64);
        }
        assert_eq!(nearest_neighbors(&sparse, k).unwrap(), knn_oracle(&sparse, k), "seed {seed} sparse");
    }
}

pub fn knn_graph_is_union_of_neighbor_lists(seeds: u64) {
    for seed in 0..seeds {
        let mut r = rng(seed);
        let n = r.gen_range(2..=30);
        let k = r.gen_range(1..n);
        let z = random_matrix(&mut r, n, 3);
        let oracle = knn_oracle(&z, k);
        let g = knn_graph(&z, &KnnConfig::new(k, KnnSource::Feat)).unwrap();
        let mut expect = vec![vec![false; n]; n];
        for (i, nb) in oracle.iter().enumerate() {
            for &j in nb {
                expect[i][j] = true;
                expect[j][i] = true;
            }
        }
        let dense: Vec<Vec<bool>> = (0..n).map(|i| (0..n).map(|j| g.has_edge(i, j)).collect()).collect();
        assert_eq!(dense, expect, "seed {seed}");
        assert!(g.is_symmetric());
        assert!((0..n).all(|i| g.out_degree(i) >= k));
    }
}

pub fn undirected_view_is_symmetric_max(seeds: u64) {
    for seed in 0..seeds {
        let mut r = rng(seed);
        let n = r.gen_range(1..=30);
        let g = random_weighted_digraph(&mut r, n, 0.2);
        let u = g.to_undirected();
        let a = dense_adjacency(&g);
        for i in 0..n {
            for j in 0..n {
                let expect = a[i][j].max(a[j][i]);
                assert_eq!(u.weight(i, j).unwrap_or(0.0), expect, "seed {seed}");
            }
        }
        assert!(!Graph::is_directed(&u));
    }
}

pub const STEP: f64 = 1e-6;
pub const TOLERANCE: f64 = 1e-5;
/// Below this magnitude the check is effectively absolute: central
/// differences at `STEP` carry about 1e-10 of rounding noise, so tiny
/// entries are held to an absolute error of `TOLERANCE * FLOOR`.
pub const FLOOR: f64 = 1e-4;

pub fn gcn(dims: &[usize]) -> GcnConfig {
    GcnConfig {
        layer_dims: dims.to_vec(),
        dropout_rate: 0.0,
    }
}

pub fn fb(dims: &[usize], r: usize) -> FbGcnConfig {
    FbGcnConfig {
        layer_dims: dims.to_vec(),
        filter_order: r,
        dropout_rate: 0.0,
        operator: Propagation::SymNormalized,
    }
}

pub fn sg(branches: Vec<BranchConfig>, mode: AlphaMode) -> ModelConfig {
    ModelConfig::SgGnn(SgGnnConfig {
        branch_configs: branches,
        embedding_dim: 3,
        mlp_dims: vec![4, 3],
        alpha_mode: mode,
        dropout_rate: 0.0,
    })
}

/// Worst relative error over all parameters, with alpha logits perturbed
/// away from zero so their gradients are nontrivial.
pub fn gradient_error(config: ModelConfig, graphs: usize, r: &mut ChaCha8Rng) -> f64 {
    let n = r.gen_range(4..=8);
    let gs: Vec<Graph> = (0..graphs).map(|_| random_simple_graph(r, n, 0.4)).collect();
    let x = random_matrix(r, n, 4);
    let labels: Vec<usize> = (0..n).map(|_| r.gen_range(0..3)).collect();
    let mask: Vec<bool> = (0..n).map(|i| i % 3 != 2).collect();

    let mut model = Model::new(config, n, r).unwrap();
    if let Some(a) = model.alpha_param_index() {
        let logits = &mut model.params_mut()[a];
        for v in logits.data_mut() {
            *v = r.gen_range(-1.0..1.0);
        }
    }
    let ops = model.operators(&gs).unwrap();
    let (_, grads) = model.loss_and_grads(&ops, &x, &labels, &mask, None).unwrap();

    let mut params = model.params().to_vec();
    let mut worst: f64 = 0.0;
    for p in 0..params.len() {
        let mut scratch = model.clone();
        let mut loss = |ps: &[Matrix]| {
            scratch.set_params(ps.to_vec()).unwrap();
            scratch.loss_and_grads(&ops, &x, &labels, &mask, None).unwrap().0
        };
        let numeric = numeric_gradient(&mut params, p, STEP, &mut loss);
        worst = worst.max(max_relative_error(&grads[p], &numeric, FLOOR));
    }
    worst
}

/// Finite-difference checks of all four architectures on `seeds` random
/// instances each; returns the worst error per architecture.
pub fn gradient_suite(seeds: u64) -> Vec<(&'static str, f64)> {
    let mut out = Vec::new();
    let worst = |f: &dyn Fn(u64) -> f64| (0..seeds).map(f).fold(0.0, f64::max);
    out.push(("GCN", worst(&|s| gradient_error(ModelConfig::Gcn(gcn(&[4, 5, 3])), 1, &mut rng(s)))));
    out.push(("FB-GCN", worst(&|s| gradient_error(ModelConfig::FbGcn(fb(&[4, 5, 3], 3)), 1, &mut rng(s)))));
    out.push((
        "SG-GNN",
        worst(&|s| {
            let branches = vec![BranchConfig::Gcn(gcn(&[4, 5, 3])), BranchConfig::FbGcn(fb(&[4, 3], 3))];
            gradient_error(sg(branches, AlphaMode::Global), 2, &mut rng(s))
        }),
    ));
    out.push((
        "SG-GNN-Node",
        worst(&|s| {
            let branches = vec![BranchConfig::Gcn(gcn(&[4, 3])), BranchConfig::Gcn(gcn(&[4, 5, 3]))];
            gradient_error(sg(branches, AlphaMode::PerNode), 2, &mut rng(s))
        }),
    ));
    out
}

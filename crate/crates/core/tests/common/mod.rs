//! Random instances and brute-force reference implementations shared by the
//! integration tests. The references work on dense matrices and share no
//! code with the library beyond the `Graph`/`Matrix` containers.

#![allow(dead_code)]

pub mod checks;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sggnn::dataset::LabelVector;
use sggnn::dense::Matrix;
use sggnn::graph::Graph;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Directed graph with random positive weights; self-loops allowed.
pub fn random_weighted_digraph(rng: &mut ChaCha8Rng, n: usize, p: f64) -> Graph {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if rng.gen::<f64>() < p {
                edges.push((i, j, rng.gen_range(0.1..2.0)));
            }
        }
    }
    Graph::from_edges(n, edges, true).unwrap()
}

/// Undirected simple unweighted G(n, p).
pub fn random_simple_graph(rng: &mut ChaCha8Rng, n: usize, p: f64) -> Graph {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.gen::<f64>() < p {
                edges.push((i, j, 1.0));
                edges.push((j, i, 1.0));
            }
        }
    }
    Graph::from_edges(n, edges, false).unwrap()
}

/// Two-or-more-block stochastic block model with block labels.
pub fn sbm(rng: &mut ChaCha8Rng, sizes: &[usize], p_in: f64, p_out: f64) -> (Graph, LabelVector) {
    let labels: Vec<usize> = sizes
        .iter()
        .enumerate()
        .flat_map(|(b, &s)| std::iter::repeat(b).take(s))
        .collect();
    let n = labels.len();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let p = if labels[i] == labels[j] { p_in } else { p_out };
            if rng.gen::<f64>() < p {
                edges.push((i, j, 1.0));
                edges.push((j, i, 1.0));
            }
        }
    }
    let g = Graph::from_edges(n, edges, false).unwrap();
    (g, LabelVector::new(labels, sizes.len()).unwrap())
}

/// G(n, m) with exactly `m` undirected edges.
pub fn random_graph_with_edges(rng: &mut ChaCha8Rng, n: usize, m: usize) -> Graph {
    let mut present = std::collections::BTreeSet::new();
    while present.len() < m {
        let i = rng.gen_range(0..n);
        let j = rng.gen_range(0..n);
        if i != j {
            present.insert((i.min(j), i.max(j)));
        }
    }
    let edges = present.iter().flat_map(|&(i, j)| [(i, j, 1.0), (j, i, 1.0)]);
    Graph::from_edges(n, edges, false).unwrap()
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

/// Small integer coordinates so that distance ties are common.
pub fn random_grid_points(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.gen_range(0..3) as f64).collect()).unwrap()
}

pub fn dense_adjacency(g: &Graph) -> Vec<Vec<f64>> {
    let n = g.num_nodes();
    let mut a = vec![vec![0.0; n]; n];
    for (i, j, w) in g.edges() {
        a[i][j] = w;
    }
    a
}

pub fn dense_matmul(a: &[Vec<f64>], x: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(a.len(), x.cols());
    for i in 0..a.len() {
        for c in 0..x.cols() {
            let mut s = 0.0;
            for (k, row) in a[i].iter().enumerate() {
                s += row * x.get(k, c);
            }
            out.set(i, c, s);
        }
    }
    out
}

/// `diag(A^3) / 2` on the 0/1 adjacency.
pub fn triangles_oracle(g: &Graph) -> Vec<u64> {
    let n = g.num_nodes();
    let a = dense_adjacency(g);
    let bin = |i: usize, j: usize| if a[i][j] != 0.0 && i != j { 1u64 } else { 0 };
    (0..n)
        .map(|i| {
            let mut s = 0;
            for j in 0..n {
                for k in 0..n {
                    s += bin(i, j) * bin(j, k) * bin(k, i);
                }
            }
            s / 2
        })
        .collect()
}

/// All-pairs hop distances by Floyd-Warshall; `None` when unreachable.
pub fn floyd_warshall(g: &Graph) -> Vec<Vec<Option<usize>>> {
    let n = g.num_nodes();
    let mut d = vec![vec![None; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = Some(0);
    }
    for (i, j, _) in g.edges() {
        if i != j {
            d[i][j] = Some(1);
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if let (Some(a), Some(b)) = (d[i][k], d[k][j]) {
                    if d[i][j].map_or(true, |c| a + b < c) {
                        d[i][j] = Some(a + b);
                    }
                }
            }
        }
    }
    d
}

/// Shortest-path counts by layering on the distance matrix.
fn path_counts(g: &Graph, d: &[Vec<Option<usize>>]) -> Vec<Vec<f64>> {
    let n = g.num_nodes();
    let a = dense_adjacency(g);
    let mut sigma = vec![vec![0.0; n]; n];
    for s in 0..n {
        let mut by_dist: Vec<usize> = (0..n).filter(|&t| d[s][t].is_some()).collect();
        by_dist.sort_by_key(|&t| d[s][t]);
        for &t in &by_dist {
            if t == s {
                sigma[s][t] = 1.0;
                continue;
            }
            let dt = d[s][t].unwrap();
            sigma[s][t] = (0..n)
                .filter(|&u| u != t && a[u][t] != 0.0 && d[s][u] == Some(dt - 1))
                .map(|u| sigma[s][u])
                .sum();
        }
    }
    sigma
}

/// Unnormalized undirected betweenness summed over unordered pairs:
/// `sum_{s<t} sigma_sv sigma_vt / sigma_st` over `v` on a shortest path.
pub fn betweenness_oracle(g: &Graph) -> Vec<f64> {
    let n = g.num_nodes();
    let d = floyd_warshall(g);
    let sigma = path_counts(g, &d);
    let mut bc = vec![0.0; n];
    for s in 0..n {
        for t in (s + 1)..n {
            let Some(dst) = d[s][t] else { continue };
            for (v, b) in bc.iter_mut().enumerate() {
                if v == s || v == t {
                    continue;
                }
                if let (Some(a), Some(c)) = (d[s][v], d[v][t]) {
                    if a + c == dst {
                        *b += sigma[s][v] * sigma[v][t] / sigma[s][t];
                    }
                }
            }
        }
    }
    bc
}

/// Core numbers by repeated peeling for every threshold.
pub fn core_numbers_oracle(g: &Graph) -> Vec<usize> {
    let n = g.num_nodes();
    let a = dense_adjacency(g);
    let mut core = vec![0; n];
    for k in 1..=n {
        let mut alive = vec![true; n];
        loop {
            let mut changed = false;
            for v in 0..n {
                if !alive[v] {
                    continue;
                }
                let deg = (0..n).filter(|&u| u != v && alive[u] && a[v][u] != 0.0).count();
                if deg < k {
                    alive[v] = false;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        for v in 0..n {
            if alive[v] {
                core[v] = k;
            }
        }
    }
    core
}

pub fn euclidean_oracle(z: &Matrix) -> Vec<Vec<f64>> {
    let n = z.rows();
    let mut d = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            let mut s = 0.0;
            for c in 0..z.cols() {
                s += (z.get(i, c) - z.get(j, c)).powi(2);
            }
            d[i][j] = s.sqrt();
        }
    }
    d
}

/// Fully sorted `(distance, id)` ranking, first `k` kept.
pub fn knn_oracle(z: &Matrix, k: usize) -> Vec<Vec<usize>> {
    let d = euclidean_oracle(z);
    (0..z.rows())
        .map(|i| {
            let mut all: Vec<(f64, usize)> = (0..z.rows()).filter(|&j| j != i).map(|j| (d[i][j], j)).collect();
            all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            all.into_iter().take(k).map(|(_, j)| j).collect()
        })
        .collect()
}

/// PageRank by dense power iteration with uniform teleport and dangling
/// mass spread uniformly.
pub fn pagerank_oracle(g: &Graph, damping: f64, iters: usize) -> Vec<f64> {
    let n = g.num_nodes();
    let a = dense_adjacency(g);
    let out: Vec<f64> = a.iter().map(|r| r.iter().filter(|&&w| w != 0.0).count() as f64).collect();
    let mut x = vec![1.0 / n as f64; n];
    for _ in 0..iters {
        let dangling: f64 = (0..n).filter(|&i| out[i] == 0.0).map(|i| x[i]).sum();
        let mut next = vec![(1.0 - damping) / n as f64 + damping * dangling / n as f64; n];
        for i in 0..n {
            for j in 0..n {
                if a[i][j] != 0.0 {
                    next[j] += damping * x[i] / out[i];
                }
            }
        }
        x = next;
    }
    x
}

/// Central finite difference of `f` at every entry of `params[p]`.
pub fn numeric_gradient(params: &mut [Matrix], p: usize, h: f64, f: &mut dyn FnMut(&[Matrix]) -> f64) -> Matrix {
    let (rows, cols) = params[p].shape();
    let mut g = Matrix::zeros(rows, cols);
    for r in 0..rows {
        for c in 0..cols {
            let orig = params[p].get(r, c);
            params[p].set(r, c, orig + h);
            let up = f(params);
            params[p].set(r, c, orig - h);
            let down = f(params);
            params[p].set(r, c, orig);
            g.set(r, c, (up - down) / (2.0 * h));
        }
    }
    g
}

/// `|a - n| / max(|a|, |n|, floor)` maximized over entries.
pub fn max_relative_error(analytic: &Matrix, numeric: &Matrix, floor: f64) -> f64 {
    analytic
        .data()
        .iter()
        .zip(numeric.data())
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}

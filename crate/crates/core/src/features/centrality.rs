use std::collections::VecDeque;

use rayon::prelude::*;

use crate::graph::Graph;

// Sources per work unit in the all-sources traversals. Chunk results are
// summed in chunk order, so floating-point totals do not depend on scheduling.
const SOURCE_CHUNK: usize = 32;

#[derive(Clone, Copy, Debug)]
pub struct PageRankParams {
    pub damping: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for PageRankParams {
    fn default() -> Self {
        Self {
            damping: 0.85,
            tolerance: 1e-10,
            max_iterations: 200,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct PowerIterationParams {
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl Default for PowerIterationParams {
    fn default() -> Self {
        Self {
            max_iterations: 1000,
            tolerance: 1e-10,
        }
    }
}

/// Hop distances from `source`; `None` for unreachable nodes.
pub fn bfs_distances(g: &Graph, source: usize) -> Vec<Option<usize>> {
    let mut dist = vec![None; g.num_nodes()];
    dist[source] = Some(0);
    let mut queue = VecDeque::from([source]);
    while let Some(v) = queue.pop_front() {
        let d = dist[v].expect("queued nodes are labeled");
        for &w in g.neighbors(v) {
            if dist[w].is_none() {
                dist[w] = Some(d + 1);
                queue.push_back(w);
            }
        }
    }
    dist
}

/// Component id of every node, numbered by smallest member.
pub fn connected_components(g: &Graph) -> Vec<usize> {
    let n = g.num_nodes();
    let mut comp = vec![usize::MAX; n];
    let mut next = 0;
    for s in 0..n {
        if comp[s] != usize::MAX {
            continue;
        }
        comp[s] = next;
        let mut stack = vec![s];
        while let Some(v) = stack.pop() {
            for &w in g.neighbors(v) {
                if comp[w] == usize::MAX {
                    comp[w] = next;
                    stack.push(w);
                }
            }
        }
        next += 1;
    }
    comp
}

/// PageRank by power iteration. Rank of dangling nodes is spread uniformly.
/// Stops when the L1 change falls below the tolerance.
pub fn pagerank(g: &Graph, params: &PageRankParams) -> Vec<f64> {
    let n = g.num_nodes();
    if n == 0 {
        return Vec::new();
    }
    let nf = n as f64;
    let out_weight: Vec<f64> = (0..n).map(|i| g.weights(i).iter().sum()).collect();
    let incoming = g.transpose();
    let mut rank = vec![1.0 / nf; n];
    let mut next = vec![0.0; n];
    for _ in 0..params.max_iterations {
        let dangling: f64 = (0..n).filter(|&i| out_weight[i] == 0.0).map(|i| rank[i]).sum();
        let base = (1.0 - params.damping) / nf + params.damping * dangling / nf;
        for (i, slot) in next.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (&j, &w) in incoming.neighbors(i).iter().zip(incoming.weights(i)) {
                acc += rank[j] * w / out_weight[j];
            }
            *slot = base + params.damping * acc;
        }
        let delta: f64 = rank.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut rank, &mut next);
        if delta < params.tolerance {
            break;
        }
    }
    let total: f64 = rank.iter().sum();
    rank.iter().map(|r| r / total).collect()
}

/// Eigenvector centrality of an undirected graph by power iteration on
/// `A + I` (same leading eigenvector as `A`, no oscillation on bipartite
/// graphs). Returns `None` if the iteration cap is reached first.
pub fn eigenvector_centrality(g: &Graph, params: &PowerIterationParams) -> Option<Vec<f64>> {
    let n = g.num_nodes();
    if n == 0 {
        return Some(Vec::new());
    }
    let mut x = vec![1.0 / (n as f64).sqrt(); n];
    let mut y = vec![0.0; n];
    for _ in 0..params.max_iterations {
        for (i, slot) in y.iter_mut().enumerate() {
            let mut acc = x[i];
            for (&j, &w) in g.neighbors(i).iter().zip(g.weights(i)) {
                acc += w * x[j];
            }
            *slot = acc;
        }
        let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Some(vec![0.0; n]);
        }
        for v in y.iter_mut() {
            *v /= norm;
        }
        let diff = x.iter().zip(&y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        std::mem::swap(&mut x, &mut y);
        if diff < params.tolerance {
            return Some(x);
        }
    }
    None
}

/// Unnormalized betweenness centrality (Brandes). On an undirected graph
/// every unordered pair of endpoints is counted once.
pub fn betweenness(g: &Graph) -> Vec<f64> {
    let n = g.num_nodes();
    let sources: Vec<usize> = (0..n).collect();
    let partials: Vec<Vec<f64>> = sources
        .par_chunks(SOURCE_CHUNK)
        .map(|chunk| {
            let mut acc = vec![0.0; n];
            let mut state = BrandesState::new(n);
            for &s in chunk {
                state.accumulate(g, s, &mut acc);
            }
            acc
        })
        .collect();
    let mut total = vec![0.0; n];
    for part in &partials {
        for (t, p) in total.iter_mut().zip(part) {
            *t += p;
        }
    }
    if !g.is_directed() {
        for t in total.iter_mut() {
            *t /= 2.0;
        }
    }
    total
}

struct BrandesState {
    stack: Vec<usize>,
    preds: Vec<Vec<usize>>,
    sigma: Vec<f64>,
    dist: Vec<i64>,
    delta: Vec<f64>,
    queue: VecDeque<usize>,
}

impl BrandesState {
    fn new(n: usize) -> Self {
        Self {
            stack: Vec::with_capacity(n),
            preds: vec![Vec::new(); n],
            sigma: vec![0.0; n],
            dist: vec![-1; n],
            delta: vec![0.0; n],
            queue: VecDeque::with_capacity(n),
        }
    }

    fn accumulate(&mut self, g: &Graph, s: usize, acc: &mut [f64]) {
        self.sigma[s] = 1.0;
        self.dist[s] = 0;
        self.queue.push_back(s);
        while let Some(v) = self.queue.pop_front() {
            self.stack.push(v);
            for &w in g.neighbors(v) {
                if self.dist[w] < 0 {
                    self.dist[w] = self.dist[v] + 1;
                    self.queue.push_back(w);
                }
                if self.dist[w] == self.dist[v] + 1 {
                    self.sigma[w] += self.sigma[v];
                    self.preds[w].push(v);
                }
            }
        }
        while let Some(w) = self.stack.pop() {
            let coeff = (1.0 + self.delta[w]) / self.sigma[w];
            for &v in &self.preds[w] {
                self.delta[v] += self.sigma[v] * coeff;
            }
            if w != s {
                acc[w] += self.delta[w];
            }
            // reset for the next source
            self.preds[w].clear();
            self.sigma[w] = 0.0;
            self.dist[w] = -1;
            self.delta[w] = 0.0;
        }
    }
}

pub(super) struct DistanceStats {
    pub harmonic: Vec<f64>,
    pub eccentricity: Vec<f64>,
}

/// Harmonic closeness (sum of inverse distances over `N - 1`) and
/// eccentricity within the node's component, from one BFS per node.
pub(super) fn distance_stats(g: &Graph) -> DistanceStats {
    let n = g.num_nodes();
    let denom = if n > 1 { (n - 1) as f64 } else { 1.0 };
    let per_node: Vec<(f64, f64)> = (0..n)
        .into_par_iter()
        .map_init(
            || (vec![usize::MAX; n], VecDeque::new()),
            |(dist, queue), s| {
                dist.fill(usize::MAX);
                dist[s] = 0;
                queue.push_back(s);
                let mut harmonic = 0.0;
                let mut ecc = 0;
                while let Some(v) = queue.pop_front() {
                    let d = dist[v];
                    if d > 0 {
                        harmonic += 1.0 / d as f64;
                        ecc = ecc.max(d);
                    }
                    for &w in g.neighbors(v) {
                        if dist[w] == usize::MAX {
                            dist[w] = d + 1;
                            queue.push_back(w);
                        }
                    }
                }
                (harmonic / denom, ecc as f64)
            },
        )
        .collect();
    DistanceStats {
        harmonic: per_node.iter().map(|p| p.0).collect(),
        eccentricity: per_node.iter().map(|p| p.1).collect(),
    }
}

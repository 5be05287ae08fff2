//! GCN, filter-bank GCN and the structure-guided multi-graph model.
//!
//! A [`Model`] owns its parameter matrices; forward passes are recorded on a
//! [`Tape`] whose leaves are those parameters, in the order returned by
//! [`Model::params`]. Every architecture consumes one propagation operator
//! per input graph, prepared once with [`Model::operators`].

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::autodiff::{glorot_init, Tape, Var};
use crate::dense::Matrix;
use crate::error::{Error, Result};
use crate::graph::Graph;

/// Operator a filter bank takes powers of.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Propagation {
    /// `D^{-1/2} (I + A) D^{-1/2}`.
    #[default]
    SymNormalized,
    /// The adjacency as given.
    Raw,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GcnConfig {
    /// Widths `F0, F1, ..., FL`; `L` layers.
    pub layer_dims: Vec<usize>,
    #[serde(default)]
    pub dropout_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FbGcnConfig {
    pub layer_dims: Vec<usize>,
    /// Number of taps `R`: powers `A^0 .. A^{R-1}`.
    pub filter_order: usize,
    #[serde(default)]
    pub dropout_rate: f64,
    #[serde(default)]
    pub operator: Propagation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum BranchConfig {
    Gcn(GcnConfig),
    FbGcn(FbGcnConfig),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaMode {
    /// One coefficient per graph.
    Global,
    /// One coefficient per (node, graph).
    PerNode,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SgGnnConfig {
    /// One branch per input graph; each ends at `embedding_dim`.
    pub branch_configs: Vec<BranchConfig>,
    pub embedding_dim: usize,
    /// Head widths after the concatenated embeddings; the last is the
    /// number of classes.
    pub mlp_dims: Vec<usize>,
    pub alpha_mode: AlphaMode,
    #[serde(default)]
    pub dropout_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum ModelConfig {
    Gcn(GcnConfig),
    FbGcn(FbGcnConfig),
    SgGnn(SgGnnConfig),
}

fn check_dims(dims: &[usize], what: &str) -> Result<()> {
    if dims.len() < 2 || dims.contains(&0) {
        return Err(Error::InvalidConfig(format!(
            "{what} needs at least 2 positive layer widths, got {dims:?}"
        )));
    }
    Ok(())
}

fn check_dropout(rate: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::InvalidConfig(format!("dropout rate {rate} outside [0, 1)")));
    }
    Ok(())
}

impl GcnConfig {
    fn validate(&self) -> Result<()> {
        check_dims(&self.layer_dims, "GCN")?;
        check_dropout(self.dropout_rate)
    }

    fn shapes(&self) -> Vec<(usize, usize)> {
        self.layer_dims.windows(2).map(|w| (w[0], w[1])).collect()
    }
}

impl FbGcnConfig {
    fn validate(&self) -> Result<()> {
        check_dims(&self.layer_dims, "FB-GCN")?;
        check_dropout(self.dropout_rate)?;
        if self.filter_order == 0 {
            return Err(Error::InvalidConfig("FB-GCN filter order must be >= 1".into()));
        }
        Ok(())
    }

    /// Layer-major, tap-minor.
    fn shapes(&self) -> Vec<(usize, usize)> {
        self.layer_dims
            .windows(2)
            .flat_map(|w| std::iter::repeat_n((w[0], w[1]), self.filter_order))
            .collect()
    }
}

impl BranchConfig {
    fn validate(&self) -> Result<()> {
        match self {
            BranchConfig::Gcn(c) => c.validate(),
            BranchConfig::FbGcn(c) => c.validate(),
        }
    }

    fn shapes(&self) -> Vec<(usize, usize)> {
        match self {
            BranchConfig::Gcn(c) => c.shapes(),
            BranchConfig::FbGcn(c) => c.shapes(),
        }
    }

    fn layer_dims(&self) -> &[usize] {
        match self {
            BranchConfig::Gcn(c) => &c.layer_dims,
            BranchConfig::FbGcn(c) => &c.layer_dims,
        }
    }

    fn operator(&self, g: &Graph) -> Graph {
        match self {
            BranchConfig::Gcn(_) => g.sym_normalized_adjacency(),
            BranchConfig::FbGcn(c) => match c.operator {
                Propagation::SymNormalized => g.sym_normalized_adjacency(),
                Propagation::Raw => g.clone(),
            },
        }
    }
}

impl SgGnnConfig {
    fn validate(&self) -> Result<()> {
        if self.branch_configs.is_empty() {
            return Err(Error::InvalidConfig("SG-GNN needs at least one branch".into()));
        }
        check_dropout(self.dropout_rate)?;
        if self.embedding_dim == 0 || self.mlp_dims.is_empty() || self.mlp_dims.contains(&0) {
            return Err(Error::InvalidConfig(
                "SG-GNN embedding and head widths must be positive".into(),
            ));
        }
        for b in &self.branch_configs {
            b.validate()?;
            if b.layer_dims().last() != Some(&self.embedding_dim) {
                return Err(Error::InvalidConfig(format!(
                    "branch output width {:?} differs from embedding_dim {}",
                    b.layer_dims().last(),
                    self.embedding_dim
                )));
            }
        }
        Ok(())
    }

    fn mlp_shapes(&self) -> Vec<(usize, usize)> {
        let mut dims = vec![self.branch_configs.len() * self.embedding_dim];
        dims.extend_from_slice(&self.mlp_dims);
        dims.windows(2).map(|w| (w[0], w[1])).collect()
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        match self {
            ModelConfig::Gcn(c) => c.validate(),
            ModelConfig::FbGcn(c) => c.validate(),
            ModelConfig::SgGnn(c) => c.validate(),
        }
    }

    /// Number of input graphs the model consumes.
    pub fn num_graphs(&self) -> usize {
        match self {
            ModelConfig::SgGnn(c) => c.branch_configs.len(),
            _ => 1,
        }
    }

    pub fn num_classes(&self) -> usize {
        match self {
            ModelConfig::Gcn(c) => *c.layer_dims.last().unwrap_or(&0),
            ModelConfig::FbGcn(c) => *c.layer_dims.last().unwrap_or(&0),
            ModelConfig::SgGnn(c) => *c.mlp_dims.last().unwrap_or(&0),
        }
    }
}

/// Learned mixing coefficients of an SG-GNN, in input-graph order.
#[derive(Clone, Debug, PartialEq)]
pub enum Alphas {
    Global(Vec<f64>),
    /// `N x I`, one row per node.
    PerNode(Matrix),
}

impl Alphas {
    /// The global coefficients, or per-graph means over nodes.
    pub fn per_graph(&self) -> Vec<f64> {
        match self {
            Alphas::Global(a) => a.clone(),
            Alphas::PerNode(m) => (0..m.cols())
                .map(|c| m.column(c).iter().sum::<f64>() / m.rows().max(1) as f64)
                .collect(),
        }
    }

    /// Largest deviation from the simplex constraint: negative entries and
    /// row sums away from 1.
    pub fn simplex_violation(&self) -> f64 {
        let row_violation = |row: &[f64]| {
            let neg = row.iter().map(|&v| (-v).max(0.0)).fold(0.0, f64::max);
            let sum: f64 = row.iter().sum();
            neg.max((sum - 1.0).abs())
        };
        match self {
            Alphas::Global(a) => row_violation(a),
            Alphas::PerNode(m) => (0..m.rows()).map(|r| row_violation(m.row(r))).fold(0.0, f64::max),
        }
    }

    /// `graph_name,alpha` rows (global) or `node_id,<graph names...>` (per node).
    pub fn write_csv(&self, path: &Path, graph_names: &[String]) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        match self {
            Alphas::Global(a) => {
                if a.len() != graph_names.len() {
                    return Err(Error::DimensionMismatch {
                        context: "alpha graph names".into(),
                        expected: a.len(),
                        found: graph_names.len(),
                    });
                }
                writeln!(w, "graph_name,alpha").map_err(io)?;
                for (name, v) in graph_names.iter().zip(a) {
                    writeln!(w, "{name},{v}").map_err(io)?;
                }
            }
            Alphas::PerNode(m) => {
                if m.cols() != graph_names.len() {
                    return Err(Error::DimensionMismatch {
                        context: "alpha graph names".into(),
                        expected: m.cols(),
                        found: graph_names.len(),
                    });
                }
                writeln!(w, "node_id,{}", graph_names.join(",")).map_err(io)?;
                for r in 0..m.rows() {
                    let row: Vec<String> = m.row(r).iter().map(|v| v.to_string()).collect();
                    writeln!(w, "{r},{}", row.join(",")).map_err(io)?;
                }
            }
        }
        w.flush().map_err(io)
    }
}

type Dropout<'a> = Option<&'a mut dyn RngCore>;

fn reborrow<'a>(d: &'a mut Dropout<'_>) -> Dropout<'a> {
    match d {
        Some(rng) => Some(&mut **rng),
        None => None,
    }
}

/// Stacked GCN layers over a prepared operator. Hidden layers use ReLU; the
/// last layer uses ReLU only if `relu_last`.
pub fn gcn_forward<'g>(
    tape: &mut Tape<'g>,
    cfg: &GcnConfig,
    weights: &[Var],
    op: &'g Graph,
    x: Var,
    relu_last: bool,
    mut dropout: Dropout<'_>,
) -> Result<Var> {
    let layers = cfg.layer_dims.len() - 1;
    if weights.len() != layers {
        return Err(Error::DimensionMismatch {
            context: "GCN weight count".into(),
            expected: layers,
            found: weights.len(),
        });
    }
    let mut h = x;
    for (l, &w) in weights.iter().enumerate() {
        if l > 0 && cfg.dropout_rate > 0.0 {
            if let Some(rng) = reborrow(&mut dropout) {
                h = tape.dropout(h, cfg.dropout_rate, rng)?;
            }
        }
        let hw = tape.matmul(h, w)?;
        h = tape.sparse_matmul(op, hw)?;
        if l + 1 < layers || relu_last {
            h = tape.relu(h);
        }
    }
    Ok(h)
}

/// Filter-bank layers `sigma(sum_r A^r H Theta_r)`, evaluated by Horner's
/// rule. With one tap the operator is never applied.
pub fn fbgcn_forward<'g>(
    tape: &mut Tape<'g>,
    cfg: &FbGcnConfig,
    weights: &[Var],
    op: &'g Graph,
    x: Var,
    relu_last: bool,
    mut dropout: Dropout<'_>,
) -> Result<Var> {
    let layers = cfg.layer_dims.len() - 1;
    let taps = cfg.filter_order;
    if weights.len() != layers * taps {
        return Err(Error::DimensionMismatch {
            context: "FB-GCN weight count".into(),
            expected: layers * taps,
            found: weights.len(),
        });
    }
    let mut h = x;
    for l in 0..layers {
        if l > 0 && cfg.dropout_rate > 0.0 {
            if let Some(rng) = reborrow(&mut dropout) {
                h = tape.dropout(h, cfg.dropout_rate, rng)?;
            }
        }
        let theta = &weights[l * taps..(l + 1) * taps];
        let mut acc = tape.matmul(h, theta[taps - 1])?;
        for r in (0..taps - 1).rev() {
            let shifted = tape.sparse_matmul(op, acc)?;
            let term = tape.matmul(h, theta[r])?;
            acc = tape.add(shifted, term)?;
        }
        h = if l + 1 < layers || relu_last { tape.relu(acc) } else { acc };
    }
    Ok(h)
}

/// Multi-graph forward: per-graph embeddings `Z_i`, mixing coefficients
/// `alpha = softmax(logits)` (per row in per-node mode), concatenation of the
/// scaled embeddings, then the MLP head. Also returns the alpha variable.
pub fn sggnn_forward<'g>(
    tape: &mut Tape<'g>,
    cfg: &SgGnnConfig,
    params: &[Var],
    ops: &'g [Graph],
    x: Var,
    mut dropout: Dropout<'_>,
) -> Result<(Var, Var)> {
    let branches = cfg.branch_configs.len();
    if ops.len() != branches {
        return Err(Error::DimensionMismatch {
            context: "SG-GNN graphs vs branches".into(),
            expected: branches,
            found: ops.len(),
        });
    }
    let mut offset = 0;
    let mut embeddings = Vec::with_capacity(branches);
    for (branch, op) in cfg.branch_configs.iter().zip(ops) {
        let count = branch.shapes().len();
        let w = &params[offset..offset + count];
        offset += count;
        let z = match branch {
            BranchConfig::Gcn(c) => gcn_forward(tape, c, w, op, x, true, reborrow(&mut dropout))?,
            BranchConfig::FbGcn(c) => fbgcn_forward(tape, c, w, op, x, true, reborrow(&mut dropout))?,
        };
        embeddings.push(z);
    }
    let logits = params[offset];
    offset += 1;
    let alpha = match cfg.alpha_mode {
        AlphaMode::Global => tape.softmax_vector(logits)?,
        AlphaMode::PerNode => tape.softmax_rows(logits),
    };
    let scaled = embeddings
        .iter()
        .enumerate()
        .map(|(i, &z)| tape.scale_rows(z, alpha, i))
        .collect::<Result<Vec<_>>>()?;
    let mut h = tape.concat_cols(&scaled)?;
    let head = &params[offset..];
    for (l, &w) in head.iter().enumerate() {
        if cfg.dropout_rate > 0.0 {
            if let Some(rng) = reborrow(&mut dropout) {
                h = tape.dropout(h, cfg.dropout_rate, rng)?;
            }
        }
        h = tape.matmul(h, w)?;
        if l + 1 < head.len() {
            h = tape.relu(h);
        }
    }
    Ok((h, alpha))
}

/// A model architecture together with its parameters.
#[derive(Clone, Debug)]
pub struct Model {
    config: ModelConfig,
    params: Vec<Matrix>,
    decay: Vec<bool>,
}

impl Model {
    /// Glorot-initialized weights; SG-GNN mixing logits start at zero.
    /// `num_nodes` sizes the per-node logit matrix.
    pub fn new<R: Rng + ?Sized>(config: ModelConfig, num_nodes: usize, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let mut params = Vec::new();
        let mut decay = Vec::new();
        let mut push_weights = |shapes: Vec<(usize, usize)>, rng: &mut R, params: &mut Vec<Matrix>| -> Result<()> {
            for (r, c) in shapes {
                params.push(glorot_init(r, c, rng)?);
                decay.push(true);
            }
            Ok(())
        };
        match &config {
            ModelConfig::Gcn(c) => push_weights(c.shapes(), rng, &mut params)?,
            ModelConfig::FbGcn(c) => push_weights(c.shapes(), rng, &mut params)?,
            ModelConfig::SgGnn(c) => {
                for b in &c.branch_configs {
                    push_weights(b.shapes(), rng, &mut params)?;
                }
                let rows = match c.alpha_mode {
                    AlphaMode::Global => 1,
                    AlphaMode::PerNode => num_nodes,
                };
                params.push(Matrix::zeros(rows, c.branch_configs.len()));
                push_weights(c.mlp_shapes(), rng, &mut params)?;
                // mixing logits are not decayed toward uniform
                let alpha_idx = params.len() - c.mlp_shapes().len() - 1;
                decay.insert(alpha_idx, false);
            }
        }
        Ok(Self { config, params, decay })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &[Matrix] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Matrix] {
        &mut self.params
    }

    /// Whether each parameter receives weight decay.
    pub fn decay_mask(&self) -> &[bool] {
        &self.decay
    }

    pub fn set_params(&mut self, params: Vec<Matrix>) -> Result<()> {
        if params.len() != self.params.len()
            || params.iter().zip(&self.params).any(|(a, b)| a.shape() != b.shape())
        {
            return Err(Error::InvalidConfig("parameter set does not match the model".into()));
        }
        self.params = params;
        Ok(())
    }

    pub fn num_parameters(&self) -> usize {
        self.params.iter().map(|p| p.data().len()).sum()
    }

    /// Index of the mixing-logit parameter, for SG-GNN models.
    pub fn alpha_param_index(&self) -> Option<usize> {
        match &self.config {
            ModelConfig::SgGnn(c) => Some(c.branch_configs.iter().map(|b| b.shapes().len()).sum()),
            _ => None,
        }
    }

    /// Propagation operators for `graphs`, one per input graph.
    pub fn operators(&self, graphs: &[Graph]) -> Result<Vec<Graph>> {
        let expected = self.config.num_graphs();
        if graphs.len() != expected {
            return Err(Error::DimensionMismatch {
                context: "model input graphs".into(),
                expected,
                found: graphs.len(),
            });
        }
        Ok(match &self.config {
            ModelConfig::Gcn(_) => vec![graphs[0].sym_normalized_adjacency()],
            ModelConfig::FbGcn(c) => vec![BranchConfig::FbGcn(c.clone()).operator(&graphs[0])],
            ModelConfig::SgGnn(c) => c
                .branch_configs
                .iter()
                .zip(graphs)
                .map(|(b, g)| b.operator(g))
                .collect(),
        })
    }

    /// Records the forward pass and returns the logits. `params` are the
    /// tape leaves for [`Model::params`]; dropout is active only when an RNG
    /// is supplied.
    pub fn forward<'g>(
        &self,
        tape: &mut Tape<'g>,
        params: &[Var],
        ops: &'g [Graph],
        x: Var,
        dropout: Dropout<'_>,
    ) -> Result<Var> {
        if params.len() != self.params.len() {
            return Err(Error::DimensionMismatch {
                context: "parameter leaves".into(),
                expected: self.params.len(),
                found: params.len(),
            });
        }
        if ops.len() != self.config.num_graphs() {
            return Err(Error::DimensionMismatch {
                context: "model operators".into(),
                expected: self.config.num_graphs(),
                found: ops.len(),
            });
        }
        match &self.config {
            ModelConfig::Gcn(c) => gcn_forward(tape, c, params, &ops[0], x, false, dropout),
            ModelConfig::FbGcn(c) => fbgcn_forward(tape, c, params, &ops[0], x, false, dropout),
            ModelConfig::SgGnn(c) => sggnn_forward(tape, c, params, ops, x, dropout).map(|(h, _)| h),
        }
    }

    /// Logits in evaluation mode (no dropout).
    pub fn predict(&self, ops: &[Graph], x: &Matrix) -> Result<Matrix> {
        let mut tape = Tape::new();
        let leaves: Vec<Var> = self.params.iter().map(|p| tape.constant(p.clone())).collect();
        let xv = tape.constant_ref(x);
        let out = self.forward(&mut tape, &leaves, ops, xv, None)?;
        Ok(tape.value(out).clone())
    }

    /// Masked cross-entropy and its gradient with respect to every
    /// parameter.
    pub fn loss_and_grads(
        &self,
        ops: &[Graph],
        x: &Matrix,
        labels: &[usize],
        mask: &[bool],
        dropout: Dropout<'_>,
    ) -> Result<(f64, Vec<Matrix>)> {
        let mut tape = Tape::new();
        let leaves: Vec<Var> = self.params.iter().map(|p| tape.leaf(p.clone())).collect();
        let xv = tape.constant_ref(x);
        let logits = self.forward(&mut tape, &leaves, ops, xv, dropout)?;
        let loss = tape.masked_cross_entropy(logits, labels, mask)?;
        let value = tape.value(loss).get(0, 0);
        let grads = tape.backward(loss)?.collect(&leaves);
        Ok((value, grads))
    }

    /// Current mixing coefficients, in input-graph order.
    pub fn extract_alphas(&self) -> Result<Alphas> {
        let ModelConfig::SgGnn(c) = &self.config else {
            return Err(Error::NotAdaptive);
        };
        let idx = self.alpha_param_index().expect("SG-GNN");
        let mut tape = Tape::new();
        let logits = tape.constant(self.params[idx].clone());
        Ok(match c.alpha_mode {
            AlphaMode::Global => {
                let a = tape.softmax_vector(logits)?;
                Alphas::Global(tape.value(a).data().to_vec())
            }
            AlphaMode::PerNode => {
                let a = tape.softmax_rows(logits);
                Alphas::PerNode(tape.value(a).clone())
            }
        })
    }
}

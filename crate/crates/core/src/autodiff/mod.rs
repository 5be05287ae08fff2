//! Minimal reverse-mode differentiation over dense matrices.
//!
//! A [`Tape`] records every primitive as it is applied. Values are appended
//! after their inputs, so walking the tape backwards from the loss visits
//! each node once in reverse topological order. Graphs enter only as
//! constant sparse operators; nothing is differentiated with respect to
//! edges.

mod optim;

pub use optim::{adam_step, glorot_init, AdamConfig, AdamState};

use std::borrow::Cow;

use rand::Rng;

use crate::dense::Matrix;
use crate::error::{Error, Result};
use crate::graph::Graph;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

enum Op<'g> {
    Leaf,
    MatMul(Var, Var),
    SparseMatMul(&'g Graph, Var),
    Add(Var, Var),
    Mul(Var, Var),
    Relu(Var),
    ConcatCols(Vec<Var>),
    ScaleRows { x: Var, weights: Var, col: usize },
    SoftmaxRows(Var),
    Dropout { x: Var, mask: Vec<f64> },
    Sum(Var),
    MaskedCrossEntropy {
        logits: Var,
        // (row, target class) of every selected node
        targets: Vec<(usize, usize)>,
        // softmax of the selected rows, in `targets` order
        probs: Vec<Vec<f64>>,
    },
}

struct Node<'g> {
    value: Cow<'g, Matrix>,
    requires_grad: bool,
    op: Op<'g>,
}

/// Record of primitive applications for one forward pass.
#[derive(Default)]
pub struct Tape<'g> {
    nodes: Vec<Node<'g>>,
}

impl<'g> Tape<'g> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Differentiable input (a parameter).
    pub fn leaf(&mut self, value: Matrix) -> Var {
        self.push(value, true, Op::Leaf)
    }

    /// Input that never receives a gradient.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, false, Op::Leaf)
    }

    /// Borrowed constant input, for large matrices such as node features.
    pub fn constant_ref(&mut self, value: &'g Matrix) -> Var {
        self.nodes.push(Node {
            value: Cow::Borrowed(value),
            requires_grad: false,
            op: Op::Leaf,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, value: Matrix, requires_grad: bool, op: Op<'g>) -> Var {
        self.nodes.push(Node {
            value: Cow::Owned(value),
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn grad_any(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        let rg = self.grad_any(&[a, b]);
        Ok(self.push(value, rg, Op::MatMul(a, b)))
    }

    /// `A * x` for a constant sparse operator `A`.
    pub fn sparse_matmul(&mut self, graph: &'g Graph, x: Var) -> Result<Var> {
        let value = graph.spmm(self.value(x))?;
        let rg = self.grad_any(&[x]);
        Ok(self.push(value, rg, Op::SparseMatMul(graph, x)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).add(self.value(b))?;
        let rg = self.grad_any(&[a, b]);
        Ok(self.push(value, rg, Op::Add(a, b)))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(Error::ShapeMismatch {
                op: "mul",
                left: va.shape(),
                right: vb.shape(),
            });
        }
        let data = va.data().iter().zip(vb.data()).map(|(x, y)| x * y).collect();
        let value = Matrix::from_vec(va.rows(), va.cols(), data)?;
        let rg = self.grad_any(&[a, b]);
        Ok(self.push(value, rg, Op::Mul(a, b)))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| v.max(0.0));
        let rg = self.grad_any(&[x]);
        self.push(value, rg, Op::Relu(x))
    }

    /// Sum of all entries, as a 1x1 value.
    pub fn sum(&mut self, x: Var) -> Var {
        let s: f64 = self.value(x).data().iter().sum();
        let rg = self.grad_any(&[x]);
        self.push(Matrix::filled(1, 1, s), rg, Op::Sum(x))
    }

    /// Horizontal concatenation of equally tall matrices.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::InvalidConfig("concat_cols of zero parts".into()))?;
        let rows = self.value(first).rows();
        for &p in parts {
            if self.value(p).rows() != rows {
                return Err(Error::ShapeMismatch {
                    op: "concat_cols",
                    left: self.shape(first),
                    right: self.shape(p),
                });
            }
        }
        let cols: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut out = Matrix::zeros(rows, cols);
        for r in 0..rows {
            let mut offset = 0;
            for &p in parts {
                let src = self.value(p).row(r);
                out.row_mut(r)[offset..offset + src.len()].copy_from_slice(src);
                offset += src.len();
            }
        }
        let rg = self.grad_any(parts);
        Ok(self.push(out, rg, Op::ConcatCols(parts.to_vec())))
    }

    /// Scales row `n` of `x` by `weights[n, col]`. A single-row `weights`
    /// applies `weights[0, col]` to every row.
    pub fn scale_rows(&mut self, x: Var, weights: Var, col: usize) -> Result<Var> {
        let (xv, wv) = (self.value(x), self.value(weights));
        if col >= wv.cols() || (wv.rows() != 1 && wv.rows() != xv.rows()) {
            return Err(Error::ShapeMismatch {
                op: "scale_rows",
                left: xv.shape(),
                right: wv.shape(),
            });
        }
        let mut out = xv.clone();
        for r in 0..out.rows() {
            let w = wv.get(if wv.rows() == 1 { 0 } else { r }, col);
            for v in out.row_mut(r) {
                *v *= w;
            }
        }
        let rg = self.grad_any(&[x, weights]);
        Ok(self.push(out, rg, Op::ScaleRows { x, weights, col }))
    }

    /// Softmax of a `1 x n` vector.
    pub fn softmax_vector(&mut self, x: Var) -> Result<Var> {
        if self.value(x).rows() != 1 {
            return Err(Error::ShapeMismatch {
                op: "softmax_vector",
                left: self.shape(x),
                right: (1, self.shape(x).1),
            });
        }
        Ok(self.softmax_rows(x))
    }

    /// Row-wise softmax.
    pub fn softmax_rows(&mut self, x: Var) -> Var {
        let mut out = self.value(x).clone();
        for r in 0..out.rows() {
            softmax_in_place(out.row_mut(r));
        }
        let rg = self.grad_any(&[x]);
        self.push(out, rg, Op::SoftmaxRows(x))
    }

    /// Inverted dropout: each entry is zeroed with probability `rate` and
    /// survivors are scaled by `1 / (1 - rate)`.
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: Var, rate: f64, rng: &mut R) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::InvalidConfig(format!("dropout rate {rate} outside [0, 1)")));
        }
        let keep = 1.0 / (1.0 - rate);
        let len = self.value(x).data().len();
        let mask: Vec<f64> = (0..len)
            .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
            .collect();
        let v = self.value(x);
        let data = v.data().iter().zip(&mask).map(|(a, m)| a * m).collect();
        let value = Matrix::from_vec(v.rows(), v.cols(), data)?;
        let rg = self.grad_any(&[x]);
        Ok(self.push(value, rg, Op::Dropout { x, mask }))
    }

    /// Mean negative log-likelihood of `labels` under row-softmax of
    /// `logits`, over the rows selected by `mask`.
    pub fn masked_cross_entropy(&mut self, logits: Var, labels: &[usize], mask: &[bool]) -> Result<Var> {
        let lv = self.value(logits);
        if labels.len() != lv.rows() || mask.len() != lv.rows() {
            return Err(Error::DimensionMismatch {
                context: "masked_cross_entropy labels/mask vs logits rows".into(),
                expected: lv.rows(),
                found: if labels.len() != lv.rows() { labels.len() } else { mask.len() },
            });
        }
        let mut targets = Vec::new();
        let mut probs = Vec::new();
        let mut total = 0.0;
        for (r, (&label, &selected)) in labels.iter().zip(mask).enumerate() {
            if !selected {
                continue;
            }
            if label >= lv.cols() {
                return Err(Error::InvalidLabels(format!(
                    "label {label} >= number of logits {}",
                    lv.cols()
                )));
            }
            let row = lv.row(r);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            total += lse - row[label];
            let mut p = row.to_vec();
            softmax_in_place(&mut p);
            targets.push((r, label));
            probs.push(p);
        }
        if targets.is_empty() {
            return Err(Error::EmptyMask);
        }
        let value = Matrix::filled(1, 1, total / targets.len() as f64);
        let rg = self.grad_any(&[logits]);
        Ok(self.push(
            value,
            rg,
            Op::MaskedCrossEntropy {
                logits,
                targets,
                probs,
            },
        ))
    }

    /// Propagates gradients from a 1x1 `loss` back to every node that
    /// requires them.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let (rows, cols) = self.shape(loss);
        if (rows, cols) != (1, 1) {
            return Err(Error::NonScalarLoss { rows, cols });
        }
        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Matrix::filled(1, 1, 1.0));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.pullback(&node.op, idx, &g, &mut grads)?;
            if matches!(node.op, Op::Leaf) {
                grads[idx] = Some(g);
            }
        }
        let grads = grads
            .into_iter()
            .zip(&self.nodes)
            .map(|(g, n)| match n.op {
                Op::Leaf if n.requires_grad => {
                    Some(g.unwrap_or_else(|| Matrix::zeros(n.value.rows(), n.value.cols())))
                }
                _ => None,
            })
            .collect();
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Matrix>], v: Var, contribution: Matrix) -> Result<()> {
        if !self.nodes[v.0].requires_grad {
            return Ok(());
        }
        match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&contribution)?,
            slot @ None => *slot = Some(contribution),
        }
        Ok(())
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn pullback(&self, op: &Op<'g>, idx: usize, g: &Matrix, grads: &mut [Option<Matrix>]) -> Result<()> {
        match op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.needs(*a) {
                    let ga = g.matmul(&self.value(*b).transpose())?;
                    self.accumulate(grads, *a, ga)?;
                }
                if self.needs(*b) {
                    let gb = self.value(*a).t_matmul(g)?;
                    self.accumulate(grads, *b, gb)?;
                }
            }
            Op::SparseMatMul(graph, x) => {
                if self.needs(*x) {
                    self.accumulate(grads, *x, graph.spmm_transpose(g)?)?;
                }
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone())?;
                self.accumulate(grads, *b, g.clone())?;
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                if self.needs(*a) {
                    let d = g.data().iter().zip(vb.data()).map(|(x, y)| x * y).collect();
                    self.accumulate(grads, *a, Matrix::from_vec(g.rows(), g.cols(), d)?)?;
                }
                if self.needs(*b) {
                    let d = g.data().iter().zip(va.data()).map(|(x, y)| x * y).collect();
                    self.accumulate(grads, *b, Matrix::from_vec(g.rows(), g.cols(), d)?)?;
                }
            }
            Op::Relu(x) => {
                let input = self.value(*x);
                let d = g
                    .data()
                    .iter()
                    .zip(input.data())
                    .map(|(gv, &xv)| if xv > 0.0 { *gv } else { 0.0 })
                    .collect();
                self.accumulate(grads, *x, Matrix::from_vec(g.rows(), g.cols(), d)?)?;
            }
            Op::Sum(x) => {
                let (r, c) = self.shape(*x);
                self.accumulate(grads, *x, Matrix::filled(r, c, g.get(0, 0)))?;
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let (rows, cols) = self.shape(p);
                    if self.needs(p) {
                        let mut part = Matrix::zeros(rows, cols);
                        for r in 0..rows {
                            part.row_mut(r).copy_from_slice(&g.row(r)[offset..offset + cols]);
                        }
                        self.accumulate(grads, p, part)?;
                    }
                    offset += cols;
                }
            }
            Op::ScaleRows { x, weights, col } => {
                let (xv, wv) = (self.value(*x), self.value(*weights));
                let broadcast = wv.rows() == 1;
                if self.needs(*x) {
                    let mut gx = g.clone();
                    for r in 0..gx.rows() {
                        let w = wv.get(if broadcast { 0 } else { r }, *col);
                        for v in gx.row_mut(r) {
                            *v *= w;
                        }
                    }
                    self.accumulate(grads, *x, gx)?;
                }
                if self.needs(*weights) {
                    let mut gw = Matrix::zeros(wv.rows(), wv.cols());
                    for r in 0..xv.rows() {
                        let dot: f64 = xv.row(r).iter().zip(g.row(r)).map(|(a, b)| a * b).sum();
                        let target = if broadcast { 0 } else { r };
                        let cur = gw.get(target, *col);
                        gw.set(target, *col, cur + dot);
                    }
                    self.accumulate(grads, *weights, gw)?;
                }
            }
            Op::SoftmaxRows(x) => {
                let s = &self.nodes[idx].value;
                let mut gx = Matrix::zeros(s.rows(), s.cols());
                for r in 0..s.rows() {
                    let (sr, gr) = (s.row(r), g.row(r));
                    let dot: f64 = sr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for (c, out) in gx.row_mut(r).iter_mut().enumerate() {
                        *out = sr[c] * (gr[c] - dot);
                    }
                }
                self.accumulate(grads, *x, gx)?;
            }
            Op::Dropout { x, mask } => {
                let d = g.data().iter().zip(mask).map(|(a, m)| a * m).collect();
                self.accumulate(grads, *x, Matrix::from_vec(g.rows(), g.cols(), d)?)?;
            }
            Op::MaskedCrossEntropy {
                logits,
                targets,
                probs,
            } => {
                let (rows, cols) = self.shape(*logits);
                let scale = g.get(0, 0) / targets.len() as f64;
                let mut gl = Matrix::zeros(rows, cols);
                for (&(r, label), p) in targets.iter().zip(probs) {
                    let row = gl.row_mut(r);
                    for (c, out) in row.iter_mut().enumerate() {
                        let indicator = if c == label { 1.0 } else { 0.0 };
                        *out = (p[c] - indicator) * scale;
                    }
                }
                self.accumulate(grads, *logits, gl)?;
            }
        }
        Ok(())
    }
}

fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Gradients of every differentiable leaf, from [`Tape::backward`].
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    /// Gradient of a leaf; zero if the loss does not depend on it. `None`
    /// for constants and intermediate values.
    pub fn get(&self, v: Var) -> Option<&Matrix> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Takes the gradients of `leaves`, in order.
    pub fn collect(mut self, leaves: &[Var]) -> Vec<Matrix> {
        leaves
            .iter()
            .map(|v| self.grads[v.0].take().expect("requested var is a differentiable leaf"))
            .collect()
    }
}

//! Semi-supervised training: stratified splits, Adam on the masked
//! cross-entropy, early stopping on validation accuracy.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{adam_step, AdamConfig, AdamState};
use crate::dataset::{LabelVector, SplitMask};
use crate::dense::Matrix;
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::models::Model;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self {
            train: 0.48,
            val: 0.32,
            test: 0.2,
        }
    }
}

impl SplitFractions {
    fn sizes(&self, n: usize) -> (usize, usize, usize) {
        let take = |f: f64| ((f * n as f64) + 1e-9).floor() as usize;
        let train = take(self.train);
        let val = take(self.val);
        let sum = self.train + self.val + self.test;
        let test = if (sum - 1.0).abs() < 1e-9 {
            n - train - val
        } else {
            take(self.test)
        };
        (train, val, test)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub split_fractions: SplitFractions,
    pub num_splits: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            weight_decay: 5e-4,
            max_epochs: 500,
            patience: 100,
            split_fractions: SplitFractions::default(),
            num_splits: 10,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let f = &self.split_fractions;
        if !(f.train > 0.0 && f.val > 0.0 && f.test > 0.0) || f.train + f.val + f.test > 1.0 + 1e-9 {
            return Err(Error::InvalidConfig(format!(
                "split fractions must be positive and sum to at most 1, got {f:?}"
            )));
        }
        if self.max_epochs == 0 || self.patience > self.max_epochs {
            return Err(Error::InvalidConfig(format!(
                "need 1 <= max_epochs and patience <= max_epochs, got {} / {}",
                self.max_epochs, self.patience
            )));
        }
        if self.num_splits == 0 {
            return Err(Error::InvalidConfig("num_splits must be positive".into()));
        }
        if !(self.learning_rate > 0.0) || !(self.weight_decay >= 0.0) {
            return Err(Error::InvalidConfig("learning rate must be positive and weight decay nonnegative".into()));
        }
        Ok(())
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            weight_decay: self.weight_decay,
            ..AdamConfig::default()
        }
    }
}

/// Generator for one purpose (`stream`) of one split realization. Distinct
/// `(seed, split_index, stream)` triples give independent sequences.
pub fn split_rng(seed: u64, split_index: usize, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (split_index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(stream);
    rng
}

const SPLIT_STREAM: u64 = 0;

/// Stratified random partition for realization `split_index`.
///
/// Nodes are shuffled within each class and then interleaved across classes
/// by relative position, so every prefix of the ordering is close to the
/// class proportions; train, validation and test take consecutive chunks.
/// Every class therefore lands in train as long as train has at least one
/// slot per class.
pub fn make_splits(labels: &LabelVector, cfg: &TrainConfig, split_index: usize) -> Result<SplitMask> {
    cfg.validate()?;
    if split_index >= cfg.num_splits {
        return Err(Error::InvalidConfig(format!(
            "split index {split_index} out of range for {} splits",
            cfg.num_splits
        )));
    }
    let n = labels.len();
    let (n_train, n_val, n_test) = cfg.split_fractions.sizes(n);
    let counts = labels.class_counts();
    if let Some((class, _)) = counts.iter().enumerate().find(|(_, &c)| c == 0) {
        return Err(Error::ClassTooSmall {
            class,
            available: 0,
            required: 1,
        });
    }
    if n_train < counts.len() {
        return Err(Error::InvalidConfig(format!(
            "{n_train} training nodes cannot cover {} classes",
            counts.len()
        )));
    }
    if n_val == 0 || n_test == 0 {
        return Err(Error::InvalidConfig(format!(
            "{n} nodes leave an empty validation or test split"
        )));
    }

    let mut rng = split_rng(cfg.seed, split_index, SPLIT_STREAM);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); counts.len()];
    for (i, &y) in labels.labels().iter().enumerate() {
        by_class[y].push(i);
    }
    // (relative position, tiebreak, node)
    let mut order: Vec<(f64, u64, usize)> = Vec::with_capacity(n);
    for members in &mut by_class {
        members.shuffle(&mut rng);
        let len = members.len() as f64;
        for (pos, &node) in members.iter().enumerate() {
            order.push((pos as f64 / len, rng.gen(), node));
        }
    }
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut train = vec![false; n];
    let mut val = vec![false; n];
    let mut test = vec![false; n];
    for (rank, &(_, _, node)) in order.iter().enumerate() {
        if rank < n_train {
            train[node] = true;
        } else if rank < n_train + n_val {
            val[node] = true;
        } else if rank < n_train + n_val + n_test {
            test[node] = true;
        }
    }
    SplitMask::new(train, val, test)
}

/// Index of the largest entry; ties go to the smaller index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (c, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = c;
        }
    }
    best
}

/// Fraction of masked rows whose argmax equals the label.
pub fn accuracy(logits: &Matrix, labels: &[usize], mask: &[bool]) -> Result<f64> {
    if logits.rows() != labels.len() || mask.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            context: "accuracy inputs".into(),
            expected: logits.rows(),
            found: labels.len().min(mask.len()),
        });
    }
    let (mut hit, mut total) = (0usize, 0usize);
    for i in (0..labels.len()).filter(|&i| mask[i]) {
        total += 1;
        if argmax(logits.row(i)) == labels[i] {
            hit += 1;
        }
    }
    if total == 0 {
        return Err(Error::EmptyMask);
    }
    Ok(hit as f64 / total as f64)
}

/// Accuracy of `model` (no dropout) on the masked nodes. `ops` are the
/// model's prepared operators.
pub fn evaluate(model: &Model, ops: &[Graph], x: &Matrix, labels: &LabelVector, mask: &[bool]) -> Result<f64> {
    let logits = model.predict(ops, x)?;
    accuracy(&logits, labels.labels(), mask)
}

/// Outcome of one training run on one split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub test_accuracy: f64,
    pub best_val_accuracy: f64,
    /// Zero-based epoch whose parameters were restored.
    pub best_epoch: usize,
    pub epochs_run: usize,
    /// Training loss per epoch, measured before that epoch's update.
    pub loss_curve: Vec<f64>,
    pub val_curve: Vec<f64>,
    /// Mixing coefficients of the restored model (per-graph; column means
    /// for the per-node variant). `None` for single-graph models.
    pub alphas: Option<Vec<f64>>,
}

/// Trains `model` on `graphs` and restores its best-validation parameters.
pub fn train(
    model: &mut Model,
    graphs: &[Graph],
    x: &Matrix,
    labels: &LabelVector,
    split: &SplitMask,
    cfg: &TrainConfig,
    rng: &mut dyn RngCore,
) -> Result<RunResult> {
    train_observed(model, graphs, x, labels, split, cfg, rng, &mut |_, _| Ok(()))
}

/// [`train`] with a callback invoked after every optimizer step with the
/// zero-based epoch and the updated model. An error from the callback aborts
/// training.
#[allow(clippy::too_many_arguments)]
pub fn train_observed(
    model: &mut Model,
    graphs: &[Graph],
    x: &Matrix,
    labels: &LabelVector,
    split: &SplitMask,
    cfg: &TrainConfig,
    rng: &mut dyn RngCore,
    observer: &mut dyn FnMut(usize, &Model) -> Result<()>,
) -> Result<RunResult> {
    cfg.validate()?;
    let n = labels.len();
    if x.rows() != n || split.train.len() != n {
        return Err(Error::DimensionMismatch {
            context: "training inputs (features, labels, masks)".into(),
            expected: n,
            found: if x.rows() != n { x.rows() } else { split.train.len() },
        });
    }
    let ops = model.operators(graphs)?;
    let adam = cfg.adam();
    let mut state = AdamState::new(model.params());
    let decay = model.decay_mask().to_vec();

    let mut best_val = f64::NEG_INFINITY;
    let mut best_epoch = 0;
    let mut best_params = model.params().to_vec();
    let mut since_best = 0;
    let mut loss_curve = Vec::new();
    let mut val_curve = Vec::new();

    for epoch in 0..cfg.max_epochs {
        let (loss, grads) = model.loss_and_grads(&ops, x, labels.labels(), &split.train, Some(&mut *rng))?;
        if !loss.is_finite() || grads.iter().any(|g| !g.all_finite()) {
            return Err(Error::Divergence { epoch, loss });
        }
        loss_curve.push(loss);
        adam_step(model.params_mut(), &grads, &decay, &mut state, &adam)?;
        observer(epoch, model)?;

        let val = evaluate(model, &ops, x, labels, &split.val)?;
        val_curve.push(val);
        if val > best_val {
            best_val = val;
            best_epoch = epoch;
            best_params.clone_from_slice(model.params());
            since_best = 0;
        } else {
            since_best += 1;
        }
        log::trace!("epoch {epoch}: loss {loss:.6} val {val:.4}");
        if since_best >= cfg.patience {
            break;
        }
    }

    model.set_params(best_params)?;
    let best_val_accuracy = evaluate(model, &ops, x, labels, &split.val)?;
    let test_accuracy = evaluate(model, &ops, x, labels, &split.test)?;
    let alphas = match model.extract_alphas() {
        Ok(a) => Some(a.per_graph()),
        Err(Error::NotAdaptive) => None,
        Err(e) => return Err(e),
    };
    Ok(RunResult {
        test_accuracy,
        best_val_accuracy,
        best_epoch,
        epochs_run: loss_curve.len(),
        loss_curve,
        val_curve,
        alphas,
    })
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// One (dataset, graph set, model) cell of the accuracy table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub dataset: String,
    pub graph_set: String,
    pub model: String,
    pub accuracies: Vec<f64>,
}

/// `dataset,graph_set,model,mean,std,split_0,...` with as many split
/// columns as the widest row.
pub fn write_results_csv(path: &Path, rows: &[ResultRow]) -> Result<()> {
    let width = rows.iter().map(|r| r.accuracies.len()).max().unwrap_or(0);
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    let mut header = String::from("dataset,graph_set,model,mean,std");
    for s in 0..width {
        header.push_str(&format!(",split_{s}"));
    }
    writeln!(w, "{header}").map_err(io)?;
    for r in rows {
        let (mean, std) = mean_std(&r.accuracies);
        let mut line = format!("{},{},{},{mean},{std}", r.dataset, r.graph_set, r.model);
        for a in &r.accuracies {
            line.push_str(&format!(",{a}"));
        }
        for _ in r.accuracies.len()..width {
            line.push(',');
        }
        writeln!(w, "{line}").map_err(io)?;
    }
    w.flush().map_err(io)
}

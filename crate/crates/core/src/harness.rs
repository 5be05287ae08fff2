//! Experiment commands driven by one JSON config.
//!
//! Every command loads the configured datasets, writes its outputs under the
//! given directory together with `metadata.json`. Failed datasets or cells
//! are collected into [`Error::PartialFailure`] after everything that did
//! succeed has been written. Outputs depend only on the config, the dataset
//! files and the seed.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{dataset_paths, load_dataset, write_feature_csv, Dataset, SplitMask};
use crate::dense::Matrix;
use crate::error::{Error, Result};
use crate::features::{global_features, role_features, FeatureKind, FeatureSpec, StructuralFeatures};
use crate::graph::Graph;
use crate::homophily::{
    edge_homophily, histogram_edges, homophily_histogram, mean_defined, node_homophily, total_variation,
    TvConvention,
};
use crate::knn::{knn_graph, KnnConfig, KnnSource};
use crate::models::{
    AlphaMode, Alphas, BranchConfig, FbGcnConfig, GcnConfig, Model, ModelConfig, Propagation, SgGnnConfig,
};
use crate::train::{make_splits, split_rng, train, write_results_csv, ResultRow, RunResult, TrainConfig};

pub const DEFAULT_DATASETS: &[&str] = &["Texas", "Wisconsin", "Cornell", "Actor", "Chameleon", "Squirrel"];

/// A dataset by name, read from `<data_dir>/<name>/`, or with its own
/// directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DatasetEntry {
    Name(String),
    Dir { name: String, dir: PathBuf },
}

impl DatasetEntry {
    pub fn name(&self) -> &str {
        match self {
            DatasetEntry::Name(n) => n,
            DatasetEntry::Dir { name, .. } => name,
        }
    }

    pub fn dir(&self, data_dir: &Path) -> PathBuf {
        match self {
            DatasetEntry::Name(n) => data_dir.join(n),
            DatasetEntry::Dir { dir, .. } => data_dir.join(dir),
        }
    }
}

/// Architecture hyperparameters shared by every model in a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelHyper {
    pub num_layers: usize,
    pub hidden_dim: usize,
    pub embedding_dim: usize,
    /// Hidden widths of the SG-GNN head; the class count is appended.
    pub mlp_hidden: Vec<usize>,
    pub dropout: f64,
    pub filter_order: usize,
    pub fb_operator: Propagation,
}

impl Default for ModelHyper {
    fn default() -> Self {
        Self {
            num_layers: 2,
            hidden_dim: 32,
            embedding_dim: 32,
            mlp_hidden: vec![32],
            dropout: 0.5,
            filter_order: 3,
            fb_operator: Propagation::SymNormalized,
        }
    }
}

/// GNN family used for single-graph baselines and SG-GNN branches.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Family {
    Gcn,
    FbGcn,
}

impl Family {
    pub const ALL: [Family; 2] = [Family::Gcn, Family::FbGcn];

    pub fn label(self) -> &'static str {
        match self {
            Family::Gcn => "GCN",
            Family::FbGcn => "FB-GCN",
        }
    }

    fn slug(self) -> &'static str {
        match self {
            Family::Gcn => "gcn",
            Family::FbGcn => "fbgcn",
        }
    }
}

impl ModelHyper {
    fn dims(&self, input: usize, output: usize) -> Vec<usize> {
        let mut dims = vec![input];
        dims.extend(std::iter::repeat_n(self.hidden_dim, self.num_layers.saturating_sub(1)));
        dims.push(output);
        dims
    }

    fn branch(&self, family: Family, input: usize, output: usize, dropout: f64) -> BranchConfig {
        let layer_dims = self.dims(input, output);
        match family {
            Family::Gcn => BranchConfig::Gcn(GcnConfig {
                layer_dims,
                dropout_rate: dropout,
            }),
            Family::FbGcn => BranchConfig::FbGcn(FbGcnConfig {
                layer_dims,
                filter_order: self.filter_order,
                dropout_rate: dropout,
                operator: self.fb_operator,
            }),
        }
    }

    /// Single-graph classifier.
    pub fn baseline(&self, family: Family, input: usize, classes: usize) -> ModelConfig {
        match self.branch(family, input, classes, self.dropout) {
            BranchConfig::Gcn(c) => ModelConfig::Gcn(c),
            BranchConfig::FbGcn(c) => ModelConfig::FbGcn(c),
        }
    }

    /// Multi-graph model with one `family` branch per graph.
    pub fn sggnn(&self, family: Family, input: usize, classes: usize, graphs: usize, mode: AlphaMode) -> ModelConfig {
        let mut mlp_dims = self.mlp_hidden.clone();
        mlp_dims.push(classes);
        ModelConfig::SgGnn(SgGnnConfig {
            branch_configs: (0..graphs)
                .map(|_| self.branch(family, input, self.embedding_dim, self.dropout))
                .collect(),
            embedding_dim: self.embedding_dim,
            mlp_dims,
            alpha_mode: mode,
            dropout_rate: self.dropout,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    /// Relative paths are resolved against the config file's directory.
    pub data_dir: PathBuf,
    pub datasets: Vec<DatasetEntry>,
    /// `k` of the KNN graphs scored by `metrics` and `homophily-hist`.
    pub metrics_k: usize,
    /// `k` values of the KNN graphs trained on by `run` and `coefs`.
    pub run_ks: Vec<usize>,
    pub role_features: FeatureSpec,
    pub global_features: FeatureSpec,
    pub knn_symmetrize: bool,
    pub tv_convention: TvConvention,
    pub histogram_bins: usize,
    pub model: ModelHyper,
    pub train: TrainConfig,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            data_dir: PathBuf::from("data"),
            datasets: DEFAULT_DATASETS.iter().map(|s| DatasetEntry::Name(s.to_string())).collect(),
            metrics_k: 3,
            run_ks: vec![3, 7],
            role_features: FeatureSpec::all(FeatureKind::Role),
            global_features: FeatureSpec::all(FeatureKind::Global),
            knn_symmetrize: true,
            tv_convention: TvConvention::default(),
            histogram_bins: 10,
            model: ModelHyper::default(),
            train: TrainConfig::default(),
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: ExperimentConfig = serde_json::from_str(&text)?;
        if cfg.data_dir.is_relative() {
            if let Some(parent) = path.parent() {
                cfg.data_dir = parent.join(&cfg.data_dir);
            }
        }
        Ok(cfg)
    }

    /// Overrides the master seed (also used for splits and training).
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.role_features.validate(FeatureKind::Role)?;
        self.global_features.validate(FeatureKind::Global)?;
        self.train.validate()?;
        if self.datasets.is_empty() {
            return Err(Error::InvalidConfig("no datasets configured".into()));
        }
        if self.metrics_k == 0 || self.run_ks.is_empty() || self.run_ks.contains(&0) {
            return Err(Error::InvalidConfig("k values must be positive".into()));
        }
        if self.histogram_bins == 0 {
            return Err(Error::InvalidConfig("histogram_bins must be positive".into()));
        }
        let m = &self.model;
        if m.num_layers == 0 || m.hidden_dim == 0 || m.embedding_dim == 0 || m.filter_order == 0 {
            return Err(Error::InvalidConfig("model widths, depth and filter order must be positive".into()));
        }
        Ok(())
    }

    /// The training config with the master seed applied.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.train.clone()
        }
    }

    /// SHA-256 of the serialized effective config.
    pub fn hash(&self) -> Result<String> {
        let text = serde_json::to_string(self)?;
        Ok(hex::encode(Sha256::digest(text.as_bytes())))
    }

    fn knn(&self, source: KnnSource, k: usize) -> KnnConfig {
        KnnConfig {
            k,
            symmetrize: self.knn_symmetrize,
            source,
        }
    }
}

/// Conventions in effect, recorded in every metadata file.
pub fn conventions(cfg: &ExperimentConfig) -> Vec<String> {
    vec![
        "edge files: duplicate entries keep the first occurrence; symmetrization keeps the larger weight".into(),
        "TV, edge and node homophily are measured on the graph as loaded; models train on its symmetrization".into(),
        format!("TV shift operator: {:?}", cfg.tv_convention),
        "edge homophily ignores self-loops; node homophily is undefined for nodes without out-neighbors".into(),
        "histogram bins are left-closed, the last bin also holds 1.0".into(),
        format!(
            "KNN: exact Euclidean, ties to the smaller node id, symmetrized by union: {}",
            cfg.knn_symmetrize
        ),
        "structural features on the symmetrized simple graph (in/out degree on the directed one); \
         standardized with population sd, constant columns set to 0"
            .into(),
        "GCN operator D^-1/2 (I + A) D^-1/2; node features used as given".into(),
        format!("FB-GCN operator: {:?}, filter order {}", cfg.model.fb_operator, cfg.model.filter_order),
        "SG-GNN: independent branch parameters, ReLU embeddings, zero-initialized mixing logits, \
         mixing logits excluded from weight decay"
            .into(),
        "splits: stratified by class, sizes floored, remainder to test when fractions sum to 1".into(),
        "early stopping on validation accuracy, ties keep the earlier epoch, best parameters restored".into(),
        "argmax ties go to the smaller class index; std columns are population std".into(),
    ]
}

#[derive(Serialize)]
struct Metadata<'a> {
    command: &'a str,
    version: &'a str,
    seed: u64,
    config_hash: String,
    config: &'a ExperimentConfig,
    conventions: Vec<String>,
    notes: Vec<String>,
    failures: Vec<String>,
}

fn write_metadata(
    out: &Path,
    command: &str,
    cfg: &ExperimentConfig,
    notes: Vec<String>,
    failures: &[String],
) -> Result<()> {
    let meta = Metadata {
        command,
        version: env!("CARGO_PKG_VERSION"),
        seed: cfg.seed,
        config_hash: cfg.hash()?,
        config: cfg,
        conventions: conventions(cfg),
        notes,
        failures: failures.to_vec(),
    };
    write_json(&out.join("metadata.json"), &meta)
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn finish(failures: Vec<String>) -> Result<()> {
    if failures.is_empty() {
        Ok(())
    } else {
        Err(Error::PartialFailure(failures))
    }
}

/// Loads every configured dataset; failures are reported per dataset.
pub fn load_datasets(cfg: &ExperimentConfig) -> Vec<(String, Result<Dataset>)> {
    cfg.datasets
        .iter()
        .map(|entry| {
            let (e, f, l) = dataset_paths(&entry.dir(&cfg.data_dir));
            let loaded = load_dataset(&e, &f, &l).map(|mut d| {
                d.name = entry.name().to_string();
                d
            });
            (entry.name().to_string(), loaded)
        })
        .collect()
}

/// Role and global feature matrices of a dataset's original graph.
pub struct Structural {
    pub role: StructuralFeatures,
    pub global: StructuralFeatures,
}

impl Structural {
    pub fn compute(ds: &Dataset, cfg: &ExperimentConfig) -> Result<Self> {
        Ok(Self {
            role: role_features(&ds.graph, &cfg.role_features)?,
            global: global_features(&ds.graph, &cfg.global_features)?,
        })
    }

    fn source<'a>(&'a self, ds: &'a Dataset, source: KnnSource) -> &'a Matrix {
        match source {
            KnnSource::Feat => &ds.features,
            KnnSource::Role => &self.role.matrix,
            KnnSource::Global => &self.global.matrix,
        }
    }

    fn notes(&self, dataset: &str) -> Vec<String> {
        self.role
            .notes
            .iter()
            .chain(&self.global.notes)
            .map(|n| format!("{dataset}: {n}"))
            .collect()
    }
}

const SOURCES: [KnnSource; 3] = [KnnSource::Feat, KnnSource::Role, KnnSource::Global];

/// The training graphs of one dataset: the symmetrized original graph, then
/// KNN graphs for every source and every `k` in `run_ks`.
pub struct GraphSuite {
    pub names: Vec<String>,
    pub graphs: Vec<Graph>,
}

impl GraphSuite {
    pub fn build(ds: &Dataset, structural: &Structural, cfg: &ExperimentConfig) -> Result<Self> {
        let mut names = vec!["Original".to_string()];
        let mut graphs = vec![ds.graph.to_undirected()];
        for source in SOURCES {
            for &k in &cfg.run_ks {
                let knn = cfg.knn(source, k);
                graphs.push(knn_graph(structural.source(ds, source), &knn)?);
                names.push(knn.name());
            }
        }
        Ok(Self { names, graphs })
    }
}

/// TV and edge homophily of the original graph and the three KNN graphs.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricsRow {
    pub dataset: String,
    /// Original, KNN-Feats, KNN-Role, KNN-Global.
    pub tv: [f64; 4],
    pub h_edge: [f64; 4],
}

pub const METRICS_HEADER: [&str; 9] = [
    "dataset",
    "tv_original",
    "tv_knn_feats",
    "tv_knn_role",
    "tv_knn_global",
    "h_edge_original",
    "h_edge_knn_feats",
    "h_edge_knn_role",
    "h_edge_knn_global",
];

/// Metrics for one dataset; also writes the KNN edge files and structural
/// feature matrices under `out/<dataset>/` when `out` is given.
pub fn dataset_metrics(ds: &Dataset, cfg: &ExperimentConfig, out: Option<&Path>) -> Result<(MetricsRow, Vec<String>)> {
    let structural = Structural::compute(ds, cfg)?;
    let mut graphs = vec![ds.graph.clone()];
    for source in SOURCES {
        graphs.push(knn_graph(structural.source(ds, source), &cfg.knn(source, cfg.metrics_k))?);
    }
    if let Some(out) = out {
        let dir = out.join(&ds.name);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        for (source, g) in SOURCES.iter().zip(&graphs[1..]) {
            g.write_edge_file(&dir.join(cfg.knn(*source, cfg.metrics_k).file_name()))?;
        }
        write_feature_csv(&dir.join("role_features.csv"), &structural.role.names, &structural.role.matrix)?;
        write_feature_csv(&dir.join("global_features.csv"), &structural.global.names, &structural.global.matrix)?;
    }
    let mut tv = [0.0; 4];
    let mut h_edge = [0.0; 4];
    for (i, g) in graphs.iter().enumerate() {
        tv[i] = total_variation(&ds.labels, g, cfg.tv_convention)?;
        h_edge[i] = edge_homophily(g, &ds.labels)?;
    }
    Ok((
        MetricsRow {
            dataset: ds.name.clone(),
            tv,
            h_edge,
        },
        structural.notes(&ds.name),
    ))
}

fn prepare_out(out: &Path) -> Result<()> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))
}

/// Table of TV and edge homophily: `metrics.csv`, one row per dataset.
pub fn cmd_metrics(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<MetricsRow>> {
    cfg.validate()?;
    prepare_out(out)?;
    let mut failures = Vec::new();
    let mut notes = Vec::new();
    let mut rows = Vec::new();
    for (name, loaded) in load_datasets(cfg) {
        let result = loaded.and_then(|ds| dataset_metrics(&ds, cfg, Some(&out.join("graphs"))));
        match result {
            Ok((row, n)) => {
                log::info!("{name}: h_edge original {:.4}", row.h_edge[0]);
                rows.push(row);
                notes.extend(n);
            }
            Err(e) => failures.push(format!("{name}: {e}")),
        }
    }
    let path = out.join("metrics.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(METRICS_HEADER)?;
    for r in &rows {
        let mut rec = vec![r.dataset.clone()];
        rec.extend(r.tv.iter().chain(&r.h_edge).map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    write_metadata(out, "metrics", cfg, notes, &failures)?;
    finish(failures).map(|_| rows)
}

/// Node-homophily histograms of one dataset on the original graph and on
/// KNN-Global-`metrics_k`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HistogramResult {
    pub dataset: String,
    pub count_original: Vec<usize>,
    pub count_knn_global: Vec<usize>,
    pub mean_original: Option<f64>,
    pub mean_knn_global: Option<f64>,
}

pub fn dataset_histogram(ds: &Dataset, cfg: &ExperimentConfig) -> Result<(HistogramResult, Vec<String>)> {
    let global = global_features(&ds.graph, &cfg.global_features)?;
    let knn = knn_graph(&global.matrix, &cfg.knn(KnnSource::Global, cfg.metrics_k))?;
    let h_orig = node_homophily(&ds.graph, &ds.labels)?;
    let h_knn = node_homophily(&knn, &ds.labels)?;
    let notes = global.notes.iter().map(|n| format!("{}: {n}", ds.name)).collect();
    Ok((
        HistogramResult {
            dataset: ds.name.clone(),
            count_original: homophily_histogram(&h_orig, cfg.histogram_bins)?,
            count_knn_global: homophily_histogram(&h_knn, cfg.histogram_bins)?,
            mean_original: mean_defined(&h_orig),
            mean_knn_global: mean_defined(&h_knn),
        },
        notes,
    ))
}

/// `homophily_hist_<dataset>.csv` per dataset plus `homophily_summary.csv`.
pub fn cmd_homophily_hist(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<HistogramResult>> {
    cfg.validate()?;
    prepare_out(out)?;
    let mut failures = Vec::new();
    let mut notes = Vec::new();
    let mut results = Vec::new();
    let edges = histogram_edges(cfg.histogram_bins);
    for (name, loaded) in load_datasets(cfg) {
        match loaded.and_then(|ds| dataset_histogram(&ds, cfg)) {
            Ok((h, n)) => {
                let path = out.join(format!("homophily_hist_{name}.csv"));
                let mut w = csv::Writer::from_path(&path)?;
                w.write_record(["bin_low", "bin_high", "count_original", "count_knn_global"])?;
                for (b, (lo, hi)) in edges.iter().enumerate() {
                    w.write_record([
                        lo.to_string(),
                        hi.to_string(),
                        h.count_original[b].to_string(),
                        h.count_knn_global[b].to_string(),
                    ])?;
                }
                w.flush().map_err(|e| Error::io(&path, e))?;
                results.push(h);
                notes.extend(n);
            }
            Err(e) => failures.push(format!("{name}: {e}")),
        }
    }
    let path = out.join("homophily_summary.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["dataset", "mean_original", "mean_knn_global", "defined_original", "defined_knn_global"])?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for h in &results {
        w.write_record([
            h.dataset.clone(),
            opt(h.mean_original),
            opt(h.mean_knn_global),
            h.count_original.iter().sum::<usize>().to_string(),
            h.count_knn_global.iter().sum::<usize>().to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    write_metadata(out, "homophily-hist", cfg, notes, &failures)?;
    finish(failures).map(|_| results)
}

/// Which graphs of the suite a cell trains on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum GraphSel {
    One(usize),
    All,
}

struct Cell {
    dataset: usize,
    graph_set: String,
    model: String,
    family: Family,
    mode: Option<AlphaMode>,
    graphs: GraphSel,
    split: usize,
}

struct CellOutcome {
    result: RunResult,
    alphas: Option<Alphas>,
}

/// A loaded dataset with everything the training commands need.
struct Prepared {
    ds: Dataset,
    suite: GraphSuite,
    splits: Vec<SplitMask>,
}

fn prepare_training(cfg: &ExperimentConfig, failures: &mut Vec<String>, notes: &mut Vec<String>) -> Vec<Prepared> {
    let train_cfg = cfg.train_config();
    let mut prepared = Vec::new();
    for (name, loaded) in load_datasets(cfg) {
        let built = loaded.and_then(|ds| {
            let structural = Structural::compute(&ds, cfg)?;
            notes.extend(structural.notes(&name));
            let suite = GraphSuite::build(&ds, &structural, cfg)?;
            let splits = (0..train_cfg.num_splits)
                .map(|i| make_splits(&ds.labels, &train_cfg, i))
                .collect::<Result<Vec<_>>>()?;
            Ok(Prepared { ds, suite, splits })
        });
        match built {
            Ok(p) => prepared.push(p),
            Err(e) => failures.push(format!("{name}: {e}")),
        }
    }
    prepared
}

fn sg_label(family: Family, mode: AlphaMode) -> String {
    match mode {
        AlphaMode::Global => format!("SG-GNN[{}]", family.label()),
        AlphaMode::PerNode => format!("SG-GNN-Node[{}]", family.label()),
    }
}

fn stream_id(parts: &[&str]) -> u64 {
    let digest = Sha256::digest(parts.join("\u{1f}").as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

fn run_cell(p: &Prepared, cell: &Cell, cfg: &ExperimentConfig) -> Result<CellOutcome> {
    let ds = &p.ds;
    let train_cfg = cfg.train_config();
    let (input, classes) = (ds.features.cols(), ds.labels.num_classes());
    let graphs: &[Graph] = match cell.graphs {
        GraphSel::One(i) => std::slice::from_ref(&p.suite.graphs[i]),
        GraphSel::All => &p.suite.graphs,
    };
    let model_cfg = match cell.mode {
        None => cfg.model.baseline(cell.family, input, classes),
        Some(mode) => cfg.model.sggnn(cell.family, input, classes, graphs.len(), mode),
    };
    let stream = stream_id(&[&ds.name, &cell.graph_set, &cell.model]);
    let mut rng = split_rng(cfg.seed, cell.split, stream);
    let mut model = Model::new(model_cfg, ds.num_nodes(), &mut rng)?;
    let result = train(
        &mut model,
        graphs,
        &ds.features,
        &ds.labels,
        &p.splits[cell.split],
        &train_cfg,
        &mut rng,
    )?;
    let alphas = match model.extract_alphas() {
        Ok(a) => Some(a),
        Err(Error::NotAdaptive) => None,
        Err(e) => return Err(e),
    };
    Ok(CellOutcome { result, alphas })
}

fn run_cells(prepared: &[Prepared], cells: &[Cell], cfg: &ExperimentConfig) -> Vec<Result<CellOutcome>> {
    cells
        .par_iter()
        .map(|cell| {
            let p = &prepared[cell.dataset];
            let outcome = run_cell(p, cell, cfg);
            match &outcome {
                Ok(o) => log::info!(
                    "{} {} {} split {}: test {:.4}",
                    p.ds.name,
                    cell.graph_set,
                    cell.model,
                    cell.split,
                    o.result.test_accuracy
                ),
                Err(e) => log::error!("{} {} {} split {}: {e}", p.ds.name, cell.graph_set, cell.model, cell.split),
            }
            outcome
        })
        .collect()
}

fn sg_cells(prepared: &[Prepared], splits: usize, cells: &mut Vec<Cell>) {
    for (d, _) in prepared.iter().enumerate() {
        for family in Family::ALL {
            for mode in [AlphaMode::Global, AlphaMode::PerNode] {
                for split in 0..splits {
                    cells.push(Cell {
                        dataset: d,
                        graph_set: "All".into(),
                        model: sg_label(family, mode),
                        family,
                        mode: Some(mode),
                        graphs: GraphSel::All,
                        split,
                    });
                }
            }
        }
    }
}

#[derive(Serialize)]
struct RunRecord<'a> {
    dataset: &'a str,
    graph_set: &'a str,
    model: &'a str,
    split: usize,
    result: &'a RunResult,
}

/// Group consecutive cells that differ only in split into result rows.
fn collect_rows(prepared: &[Prepared], cells: &[Cell], outcomes: &[Result<CellOutcome>]) -> (Vec<ResultRow>, Vec<String>) {
    let mut rows: Vec<ResultRow> = Vec::new();
    let mut failures = Vec::new();
    for (cell, outcome) in cells.iter().zip(outcomes) {
        let name = &prepared[cell.dataset].ds.name;
        if cell.split == 0 {
            rows.push(ResultRow {
                dataset: name.clone(),
                graph_set: cell.graph_set.clone(),
                model: cell.model.clone(),
                accuracies: Vec::new(),
            });
        }
        match outcome {
            Ok(o) => rows.last_mut().expect("split 0 first").accuracies.push(o.result.test_accuracy),
            Err(e) => failures.push(format!(
                "{name} / {} / {} / split {}: {e}",
                cell.graph_set, cell.model, cell.split
            )),
        }
    }
    (rows, failures)
}

/// Test accuracy of every (dataset, graph, model) cell over all splits:
/// `results.csv` and per-run details in `runs.json`.
pub fn cmd_run(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<ResultRow>> {
    cfg.validate()?;
    prepare_out(out)?;
    let mut failures = Vec::new();
    let mut notes = Vec::new();
    let prepared = prepare_training(cfg, &mut failures, &mut notes);
    let splits = cfg.train.num_splits;

    let mut cells = Vec::new();
    for (d, p) in prepared.iter().enumerate() {
        for family in Family::ALL {
            for (g, name) in p.suite.names.iter().enumerate() {
                for split in 0..splits {
                    cells.push(Cell {
                        dataset: d,
                        graph_set: name.clone(),
                        model: family.label().into(),
                        family,
                        mode: None,
                        graphs: GraphSel::One(g),
                        split,
                    });
                }
            }
        }
    }
    sg_cells(&prepared, splits, &mut cells);

    let outcomes = run_cells(&prepared, &cells, cfg);
    let (rows, cell_failures) = collect_rows(&prepared, &cells, &outcomes);
    failures.extend(cell_failures);
    write_results_csv(&out.join("results.csv"), &rows)?;

    let records: Vec<RunRecord> = cells
        .iter()
        .zip(&outcomes)
        .filter_map(|(c, o)| {
            o.as_ref().ok().map(|o| RunRecord {
                dataset: &prepared[c.dataset].ds.name,
                graph_set: &c.graph_set,
                model: &c.model,
                split: c.split,
                result: &o.result,
            })
        })
        .collect();
    write_json(&out.join("runs.json"), &records)?;
    for p in &prepared {
        notes.push(format!("{}: graphs {}", p.ds.name, p.suite.names.join(", ")));
    }
    write_metadata(out, "run", cfg, notes, &failures)?;
    finish(failures).map(|_| rows)
}

/// Mean learned coefficients per dataset for one branch family.
#[derive(Clone, Debug, PartialEq)]
pub struct CoefTable {
    pub family: Family,
    pub graph_names: Vec<String>,
    pub datasets: Vec<String>,
    /// Global-variant alpha averaged over splits, one row per dataset.
    pub global: Vec<Vec<f64>>,
    /// Per-node alpha column means averaged over splits.
    pub per_node_mean: Vec<Vec<f64>>,
}

fn write_coef_csv(path: &Path, names: &[String], datasets: &[String], rows: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["dataset".to_string()];
    header.extend(names.iter().cloned());
    w.write_record(&header)?;
    for (d, row) in datasets.iter().zip(rows) {
        let mut rec = vec![d.clone()];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn mean_rows(rows: &[Vec<f64>]) -> Vec<f64> {
    let width = rows.first().map_or(0, Vec::len);
    (0..width)
        .map(|c| rows.iter().map(|r| r[c]).sum::<f64>() / rows.len() as f64)
        .collect()
}

/// Learned mixing coefficients: `coefs_<family>.csv` (global variant) and
/// `coefs_node_mean_<family>.csv` (per-node column means), each one row per
/// dataset and one column per graph, averaged over splits. Split-averaged
/// coefficient files per dataset go under `alphas/`.
pub fn cmd_coefs(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<CoefTable>> {
    cfg.validate()?;
    prepare_out(out)?;
    let mut failures = Vec::new();
    let mut notes = Vec::new();
    let prepared = prepare_training(cfg, &mut failures, &mut notes);
    let splits = cfg.train.num_splits;
    let mut cells = Vec::new();
    sg_cells(&prepared, splits, &mut cells);
    let outcomes = run_cells(&prepared, &cells, cfg);
    let (rows, cell_failures) = collect_rows(&prepared, &cells, &outcomes);
    failures.extend(cell_failures);
    write_results_csv(&out.join("results.csv"), &rows)?;

    let alpha_dir = out.join("alphas");
    fs::create_dir_all(&alpha_dir).map_err(|e| Error::io(&alpha_dir, e))?;
    let graph_names = prepared.first().map(|p| p.suite.names.clone()).unwrap_or_default();
    let mut tables = Vec::new();
    for family in Family::ALL {
        let mut table = CoefTable {
            family,
            graph_names: graph_names.clone(),
            datasets: Vec::new(),
            global: Vec::new(),
            per_node_mean: Vec::new(),
        };
        for (d, p) in prepared.iter().enumerate() {
            let gather = |mode: AlphaMode| -> Vec<&Alphas> {
                cells
                    .iter()
                    .zip(&outcomes)
                    .filter(|(c, _)| c.dataset == d && c.family == family && c.mode == Some(mode))
                    .filter_map(|(_, o)| o.as_ref().ok().and_then(|o| o.alphas.as_ref()))
                    .collect()
            };
            let global = gather(AlphaMode::Global);
            let node = gather(AlphaMode::PerNode);
            if global.len() != splits || node.len() != splits {
                continue;
            }
            let g_rows: Vec<Vec<f64>> = global.iter().map(|a| a.per_graph()).collect();
            let n_rows: Vec<Vec<f64>> = node.iter().map(|a| a.per_graph()).collect();
            let g_mean = mean_rows(&g_rows);
            let name = &p.ds.name;
            Alphas::Global(g_mean.clone()).write_csv(
                &alpha_dir.join(format!("{name}-{}-global.csv", family.slug())),
                &p.suite.names,
            )?;
            let mut node_mean = Matrix::zeros(p.ds.num_nodes(), p.suite.names.len());
            for a in &node {
                if let Alphas::PerNode(m) = a {
                    node_mean.add_assign(m)?;
                }
            }
            Alphas::PerNode(node_mean.scale(1.0 / splits as f64)).write_csv(
                &alpha_dir.join(format!("{name}-{}-node.csv", family.slug())),
                &p.suite.names,
            )?;
            table.datasets.push(name.clone());
            table.global.push(g_mean);
            table.per_node_mean.push(mean_rows(&n_rows));
        }
        write_coef_csv(
            &out.join(format!("coefs_{}.csv", family.slug())),
            &graph_names,
            &table.datasets,
            &table.global,
        )?;
        write_coef_csv(
            &out.join(format!("coefs_node_mean_{}.csv", family.slug())),
            &graph_names,
            &table.datasets,
            &table.per_node_mean,
        )?;
        tables.push(table);
    }
    write_metadata(out, "coefs", cfg, notes, &failures)?;
    finish(failures).map(|_| tables)
}

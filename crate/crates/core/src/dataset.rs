//! Node labels, split masks, datasets and the text formats they are read from.
//!
//! * Edge file: one edge per line, `src<TAB>dst[<TAB>weight]`, zero-based ids,
//!   lines starting with `#` ignored.
//! * Feature file: CSV, one row per node in id order, numeric columns. A
//!   first row containing a non-numeric field is treated as a header.
//! * Label file: CSV with columns `node_id,label`, optional header.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::dense::{FeatureMatrix, Matrix};
use crate::error::{Error, Result};
use crate::graph::Graph;

/// Per-node class indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelVector {
    labels: Vec<usize>,
    num_classes: usize,
}

impl LabelVector {
    pub fn new(labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::InvalidLabels(format!(
                "at least 2 classes required, got {num_classes}"
            )));
        }
        if let Some((node, &l)) = labels.iter().enumerate().find(|(_, &l)| l >= num_classes) {
            return Err(Error::InvalidLabels(format!(
                "node {node} has label {l}, outside 0..{num_classes}"
            )));
        }
        Ok(Self {
            labels,
            num_classes,
        })
    }

    /// Infers the class count as `max(label) + 1`.
    pub fn from_labels(labels: Vec<usize>) -> Result<Self> {
        let num_classes = labels.iter().max().map_or(0, |m| m + 1);
        Self::new(labels, num_classes)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    #[inline]
    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    #[inline]
    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    #[inline]
    pub fn get(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Labels cast to reals, the signal form used by total variation.
    pub fn as_signal(&self) -> Vec<f64> {
        self.labels.iter().map(|&l| l as f64).collect()
    }
}

/// Disjoint train/validation/test node masks.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitMask {
    pub train: Vec<bool>,
    pub val: Vec<bool>,
    pub test: Vec<bool>,
}

impl SplitMask {
    pub fn new(train: Vec<bool>, val: Vec<bool>, test: Vec<bool>) -> Result<Self> {
        let n = train.len();
        if val.len() != n || test.len() != n {
            return Err(Error::DimensionMismatch {
                context: "split masks".into(),
                expected: n,
                found: if val.len() != n { val.len() } else { test.len() },
            });
        }
        for i in 0..n {
            if u8::from(train[i]) + u8::from(val[i]) + u8::from(test[i]) > 1 {
                return Err(Error::InvalidConfig(format!(
                    "node {i} appears in more than one split"
                )));
            }
        }
        if !train.iter().any(|&t| t) {
            return Err(Error::EmptyMask);
        }
        Ok(Self { train, val, test })
    }

    pub fn counts(&self) -> (usize, usize, usize) {
        let c = |m: &[bool]| m.iter().filter(|&&b| b).count();
        (c(&self.train), c(&self.val), c(&self.test))
    }
}

/// Graph, node features and labels for one benchmark.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub name: String,
    pub graph: Graph,
    pub features: FeatureMatrix,
    pub labels: LabelVector,
}

impl Dataset {
    pub fn new(name: impl Into<String>, graph: Graph, features: FeatureMatrix, labels: LabelVector) -> Result<Self> {
        let n = graph.num_nodes();
        if features.rows() != n {
            return Err(Error::DimensionMismatch {
                context: "feature rows vs graph nodes".into(),
                expected: n,
                found: features.rows(),
            });
        }
        if labels.len() != n {
            return Err(Error::DimensionMismatch {
                context: "label count vs graph nodes".into(),
                expected: n,
                found: labels.len(),
            });
        }
        Ok(Self {
            name: name.into(),
            graph,
            features,
            labels,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.graph.num_nodes()
    }
}

/// Loads a dataset from its three files. The node count comes from the
/// feature file; edges and labels are checked against it.
pub fn load_dataset(edge_file: &Path, feature_file: &Path, label_file: &Path) -> Result<Dataset> {
    let features = read_feature_csv(feature_file)?;
    let n = features.rows();
    let labels = read_label_csv(label_file, n)?;
    let graph = read_edge_file(edge_file, n)?;
    let name = edge_file
        .parent()
        .and_then(|p| p.file_name())
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Dataset::new(name, graph, features, labels)
}

/// Loads `<dir>/edges.tsv`, `<dir>/features.csv` and `<dir>/labels.csv`.
pub fn load_dataset_dir(dir: &Path) -> Result<Dataset> {
    let (e, f, l) = dataset_paths(dir);
    load_dataset(&e, &f, &l)
}

pub fn dataset_paths(dir: &Path) -> (PathBuf, PathBuf, PathBuf) {
    (dir.join("edges.tsv"), dir.join("features.csv"), dir.join("labels.csv"))
}

/// Reads an edge file into a directed graph with `num_nodes` nodes.
pub fn read_edge_file(path: &Path, num_nodes: usize) -> Result<Graph> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut edges = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split('\t').map(str::trim).collect();
        if fields.len() < 2 || fields.len() > 3 {
            return Err(Error::parse(
                path,
                line_no,
                format!("expected `src<TAB>dst[<TAB>weight]`, got {} fields", fields.len()),
            ));
        }
        let id = |s: &str| -> Result<usize> {
            let v: usize = s
                .parse()
                .map_err(|_| Error::parse(path, line_no, format!("invalid node id `{s}`")))?;
            if v >= num_nodes {
                return Err(Error::parse(
                    path,
                    line_no,
                    format!("node id {v} out of range (graph has {num_nodes} nodes)"),
                ));
            }
            Ok(v)
        };
        let src = id(fields[0])?;
        let dst = id(fields[1])?;
        let weight = match fields.get(2) {
            Some(s) => {
                let w: f64 = s
                    .parse()
                    .map_err(|_| Error::parse(path, line_no, format!("invalid weight `{s}`")))?;
                if !w.is_finite() {
                    return Err(Error::parse(path, line_no, "non-finite weight"));
                }
                w
            }
            None => 1.0,
        };
        edges.push((src, dst, weight));
    }
    let (graph, duplicates) = Graph::from_edges_counting(num_nodes, edges, true)?;
    if duplicates > 0 {
        log::warn!(
            "{}: collapsed {duplicates} duplicate edge(s), keeping the first occurrence",
            path.display()
        );
    }
    Ok(graph)
}

fn csv_reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn record_line(record: &csv::StringRecord, fallback: usize) -> usize {
    record.position().map_or(fallback, |p| p.line() as usize)
}

/// Reads a numeric CSV with an optional header row.
pub fn read_feature_csv(path: &Path) -> Result<FeatureMatrix> {
    let mut reader = csv_reader(path)?;
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (idx, record) in reader.records().enumerate() {
        let record = record?;
        let line = record_line(&record, idx + 1);
        if idx == 0 && record.iter().any(|f| f.parse::<f64>().is_err()) {
            continue;
        }
        if record.len() == 1 && record.get(0) == Some("") {
            continue;
        }
        match cols {
            None => cols = Some(record.len()),
            Some(c) if c != record.len() => {
                return Err(Error::parse(
                    path,
                    line,
                    format!("expected {c} columns, found {}", record.len()),
                ))
            }
            _ => {}
        }
        for field in record.iter() {
            let v: f64 = field
                .parse()
                .map_err(|_| Error::parse(path, line, format!("non-numeric value `{field}`")))?;
            if !v.is_finite() {
                return Err(Error::parse(path, line, format!("non-finite value `{field}`")));
            }
            data.push(v);
        }
        rows += 1;
    }
    Matrix::from_vec(rows, cols.unwrap_or(0), data)
}

/// Reads `node_id,label` rows; every node in `0..num_nodes` must appear once.
pub fn read_label_csv(path: &Path, num_nodes: usize) -> Result<LabelVector> {
    let mut reader = csv_reader(path)?;
    let mut labels: Vec<Option<usize>> = vec![None; num_nodes];
    for (idx, record) in reader.records().enumerate() {
        let record = record?;
        let line = record_line(&record, idx + 1);
        if record.len() == 1 && record.get(0) == Some("") {
            continue;
        }
        if record.len() != 2 {
            return Err(Error::parse(
                path,
                line,
                format!("expected `node_id,label`, found {} fields", record.len()),
            ));
        }
        let node_field = &record[0];
        let label_field = &record[1];
        let node: usize = match node_field.parse() {
            Ok(v) => v,
            Err(_) if idx == 0 => continue, // header
            Err(_) => {
                return Err(Error::parse(path, line, format!("invalid node id `{node_field}`")))
            }
        };
        let label: usize = label_field.parse().map_err(|_| {
            Error::parse(path, line, format!("label `{label_field}` is not a non-negative integer"))
        })?;
        if node >= num_nodes {
            return Err(Error::parse(
                path,
                line,
                format!("node id {node} out of range (feature file has {num_nodes} rows)"),
            ));
        }
        if labels[node].replace(label).is_some() {
            return Err(Error::parse(path, line, format!("node {node} labeled twice")));
        }
    }
    let labels = labels
        .into_iter()
        .enumerate()
        .map(|(i, l)| {
            l.ok_or_else(|| Error::InvalidLabels(format!("{}: node {i} has no label", path.display())))
        })
        .collect::<Result<Vec<_>>>()?;
    LabelVector::from_labels(labels)
}

/// Writes a feature matrix as CSV with a header naming every column.
pub fn write_feature_csv(path: &Path, names: &[String], m: &FeatureMatrix) -> Result<()> {
    if names.len() != m.cols() {
        return Err(Error::DimensionMismatch {
            context: "feature header".into(),
            expected: m.cols(),
            found: names.len(),
        });
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(names)?;
    for r in 0..m.rows() {
        w.write_record(m.row(r).iter().map(|v| v.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn write_label_csv(path: &Path, labels: &LabelVector) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["node_id", "label"])?;
    for (i, l) in labels.labels().iter().enumerate() {
        w.write_record([i.to_string(), l.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Converts the raw benchmark layout (`out1_graph_edges.txt` and
/// `out1_node_feature_label.txt`) into the three files read by
/// [`load_dataset_dir`].
///
/// Feature fields are comma-separated dense values, or, when `sparse_dim` is
/// given, comma-separated indices of the nonzero (unit) entries.
pub fn convert_raw_benchmark(input: &Path, output: &Path, sparse_dim: Option<usize>) -> Result<()> {
    let node_path = input.join("out1_node_feature_label.txt");
    let edge_path = input.join("out1_graph_edges.txt");
    let text = fs::read_to_string(&node_path).map_err(|e| Error::io(&node_path, e))?;

    let mut rows: Vec<(usize, Vec<f64>, usize)> = Vec::new();
    for (idx, line) in text.lines().enumerate().skip(1) {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split('\t').collect();
        if parts.len() != 3 {
            return Err(Error::parse(&node_path, line_no, "expected `id<TAB>features<TAB>label`"));
        }
        let id: usize = parts[0]
            .trim()
            .parse()
            .map_err(|_| Error::parse(&node_path, line_no, "invalid node id"))?;
        let label: usize = parts[2]
            .trim()
            .parse()
            .map_err(|_| Error::parse(&node_path, line_no, "invalid label"))?;
        let values: Vec<f64> = match sparse_dim {
            None => parts[1]
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::parse(&node_path, line_no, "invalid feature value"))?,
            Some(dim) => {
                let mut v = vec![0.0; dim];
                for s in parts[1].split(',').filter(|s| !s.trim().is_empty()) {
                    let k: usize = s
                        .trim()
                        .parse()
                        .map_err(|_| Error::parse(&node_path, line_no, "invalid feature index"))?;
                    if k >= dim {
                        return Err(Error::parse(
                            &node_path,
                            line_no,
                            format!("feature index {k} >= {dim}"),
                        ));
                    }
                    v[k] = 1.0;
                }
                v
            }
        };
        rows.push((id, values, label));
    }
    rows.sort_by_key(|r| r.0);
    if rows.iter().enumerate().any(|(i, r)| r.0 != i) {
        return Err(Error::InvalidLabels(format!(
            "{}: node ids are not contiguous from 0",
            node_path.display()
        )));
    }
    let n = rows.len();
    let features = Matrix::from_rows(&rows.iter().map(|r| r.1.clone()).collect::<Vec<_>>())?;
    let labels = LabelVector::from_labels(rows.iter().map(|r| r.2).collect())?;

    let edge_text = fs::read_to_string(&edge_path).map_err(|e| Error::io(&edge_path, e))?;
    fs::create_dir_all(output).map_err(|e| Error::io(output, e))?;
    let out_edges = output.join("edges.tsv");
    let file = File::create(&out_edges).map_err(|e| Error::io(&out_edges, e))?;
    let mut w = BufWriter::new(file);
    for (idx, line) in edge_text.lines().enumerate().skip(1) {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() != 2 {
            return Err(Error::parse(&edge_path, idx + 1, "expected `src<TAB>dst`"));
        }
        for f in &fields {
            let id: usize = f
                .parse()
                .map_err(|_| Error::parse(&edge_path, idx + 1, format!("invalid node id `{f}`")))?;
            if id >= n {
                return Err(Error::parse(&edge_path, idx + 1, format!("node id {id} out of range")));
            }
        }
        writeln!(w, "{}\t{}", fields[0], fields[1]).map_err(|e| Error::io(&out_edges, e))?;
    }
    w.flush().map_err(|e| Error::io(&out_edges, e))?;

    let names: Vec<String> = (0..features.cols()).map(|c| format!("x{c}")).collect();
    write_feature_csv(&output.join("features.csv"), &names, &features)?;
    write_label_csv(&output.join("labels.csv"), &labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn minimal_dataset() {
        let dir = tempfile::tempdir().unwrap();
        let e = write(dir.path(), "edges.tsv", "# comment\n0\t1\n");
        let f = write(dir.path(), "features.csv", "1.0\n2.0\n");
        let l = write(dir.path(), "labels.csv", "node_id,label\n0,0\n1,1\n");
        let ds = load_dataset(&e, &f, &l).unwrap();
        assert_eq!(ds.num_nodes(), 2);
        assert_eq!(ds.graph.num_edges(), 1);
        assert_eq!(ds.labels.num_classes(), 2);
    }

    #[test]
    fn out_of_range_edge_names_node_and_line() {
        let dir = tempfile::tempdir().unwrap();
        let e = write(dir.path(), "edges.tsv", "0\t1\n0\t5\n");
        let f = write(dir.path(), "features.csv", "1\n2\n3\n");
        let l = write(dir.path(), "labels.csv", "0,0\n1,1\n2,0\n");
        let err = load_dataset(&e, &f, &l).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("node id 5"), "{msg}");
        assert!(msg.contains("edges.tsv:2"), "{msg}");
    }

    #[test]
    fn non_integer_label() {
        let dir = tempfile::tempdir().unwrap();
        let l = write(dir.path(), "labels.csv", "node_id,label\n0,0\n1,1.5\n");
        let err = read_label_csv(&l, 2).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
    }

    #[test]
    fn missing_label_is_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let l = write(dir.path(), "labels.csv", "0,0\n1,1\n");
        assert!(read_label_csv(&l, 3).is_err());
    }

    #[test]
    fn malformed_feature_row() {
        let dir = tempfile::tempdir().unwrap();
        let f = write(dir.path(), "features.csv", "a,b\n1,2\n3\n");
        let err = read_feature_csv(&f).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
    }

    #[test]
    fn feature_header_skipped() {
        let dir = tempfile::tempdir().unwrap();
        let f = write(dir.path(), "features.csv", "deg,tri\n1,2\n3,4\n");
        let m = read_feature_csv(&f).unwrap();
        assert_eq!(m.shape(), (2, 2));
    }

    #[test]
    fn duplicate_edges_collapse() {
        let dir = tempfile::tempdir().unwrap();
        let e = write(dir.path(), "edges.tsv", "0\t1\t2\n0\t1\t7\n1\t1\n");
        let g = read_edge_file(&e, 2).unwrap();
        assert_eq!(g.num_edges(), 2);
        assert_eq!(g.weight(0, 1), Some(2.0));
        assert!(g.has_edge(1, 1));
    }

    #[test]
    fn split_mask_rejects_overlap() {
        assert!(SplitMask::new(vec![true, false], vec![true, false], vec![false, true]).is_err());
        assert!(matches!(
            SplitMask::new(vec![false, false], vec![true, false], vec![false, true]),
            Err(Error::EmptyMask)
        ));
    }

    #[test]
    fn raw_benchmark_conversion() {
        let dir = tempfile::tempdir().unwrap();
        write(
            dir.path(),
            "out1_node_feature_label.txt",
            "node_id\tfeature\tlabel\n1\t0,1\t1\n0\t1,0\t0\n2\t1,1\t0\n",
        );
        write(dir.path(), "out1_graph_edges.txt", "node_id\tnode_id\n0\t1\n1\t2\n");
        let out = dir.path().join("conv");
        convert_raw_benchmark(dir.path(), &out, None).unwrap();
        let ds = load_dataset_dir(&out).unwrap();
        assert_eq!(ds.num_nodes(), 3);
        assert_eq!(ds.labels.labels(), &[0, 1, 0]);
        assert_eq!(ds.features.row(0), &[1.0, 0.0]);

        write(
            dir.path(),
            "out1_node_feature_label.txt",
            "node_id\tfeature\tlabel\n0\t2\t0\n1\t0,3\t1\n2\t\t0\n",
        );
        convert_raw_benchmark(dir.path(), &out, Some(4)).unwrap();
        let ds = load_dataset_dir(&out).unwrap();
        assert_eq!(ds.features.row(1), &[1.0, 0.0, 0.0, 1.0]);
        assert_eq!(ds.features.row(2), &[0.0; 4]);
    }
}

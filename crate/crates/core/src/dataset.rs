//! Plain-text dataset directories, random splits and synthetic graphs.
//!
//! A dataset directory holds:
//!
//! * `edges.tsv`: `src<TAB>dst` per line, 0-based, `#` starts a comment
//! * `features.csv`: one comma-separated row per node
//! * `labels.csv`: one class id per line
//! * `meta.json`: `{"directed": bool, "num_classes": int, "name": string}`
//! * `splits.json` (optional): `{"train": [..], "val": [..], "test": [..]}`

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, Read};
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::derived_rng;
use crate::graph::{symmetrize, Graph, GraphError, Splits};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("missing file {0}")]
    MissingFile(PathBuf),
    #[error("{file}:{line}: {msg}")]
    Parse { file: PathBuf, line: usize, msg: String },
    #[error("{file}:{line}: label {label} is outside 0..{num_classes}")]
    LabelOutOfRange {
        file: PathBuf,
        line: usize,
        label: usize,
        num_classes: usize,
    },
    #[error("{file}:{line}: edge ({src}, {dst}) references a node outside 0..{num_nodes}")]
    DanglingEdge {
        file: PathBuf,
        line: usize,
        src: usize,
        dst: usize,
        num_nodes: usize,
    },
    #[error("{file}: {msg}")]
    Invalid { file: PathBuf, msg: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Meta {
    pub directed: bool,
    pub num_classes: usize,
    pub name: String,
}

#[derive(Debug, Clone)]
pub struct DatasetBundle {
    pub graph: Graph,
    pub name: String,
    pub directed: bool,
    /// Edge lines dropped as repeats of an earlier line.
    pub duplicate_edges: usize,
    /// Explicit `i -> i` lines dropped (self-loops are always added).
    pub self_loop_lines: usize,
}

impl DatasetBundle {
    pub fn num_features(&self) -> usize {
        self.graph.num_features()
    }

    pub fn num_classes(&self) -> usize {
        self.graph.num_classes()
    }

    /// Undirected edge count for undirected data, directed count otherwise.
    pub fn num_edges(&self) -> usize {
        let directed = self.graph.edge_list().len();
        if self.directed {
            directed
        } else {
            directed / 2
        }
    }
}

fn read_text(path: &Path) -> Result<String, DatasetError> {
    if !path.exists() {
        return Err(DatasetError::MissingFile(path.to_path_buf()));
    }
    fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn parse_err(file: &Path, line: usize, msg: impl Into<String>) -> DatasetError {
    DatasetError::Parse {
        file: file.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

/// Non-empty, non-comment lines with their 1-based line numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, raw)| {
        let line = raw.split('#').next().unwrap_or("").trim();
        (!line.is_empty()).then_some((i + 1, line))
    })
}

fn parse_index(file: &Path, line: usize, cell: &str) -> Result<usize, DatasetError> {
    cell.trim()
        .parse()
        .map_err(|_| parse_err(file, line, format!("'{cell}' is not a non-negative integer")))
}

/// Parses and validates a dataset directory.
pub fn load_dataset(dir: &Path) -> Result<DatasetBundle, DatasetError> {
    let meta_path = dir.join("meta.json");
    let meta: Meta = serde_json::from_str(&read_text(&meta_path)?).map_err(|e| parse_err(&meta_path, e.line(), e.to_string()))?;

    let labels_path = dir.join("labels.csv");
    let mut labels = Vec::new();
    for (line, text) in content_lines(&read_text(&labels_path)?) {
        let label = parse_index(&labels_path, line, text)?;
        if label >= meta.num_classes {
            return Err(DatasetError::LabelOutOfRange {
                file: labels_path,
                line,
                label,
                num_classes: meta.num_classes,
            });
        }
        labels.push(label);
    }
    let num_nodes = labels.len();

    let features_path = dir.join("features.csv");
    let mut values = Vec::new();
    let mut width = None;
    let mut rows = 0;
    for (line, text) in content_lines(&read_text(&features_path)?) {
        let before = values.len();
        for cell in text.split(',') {
            let v: f64 = cell
                .trim()
                .parse()
                .map_err(|_| parse_err(&features_path, line, format!("'{cell}' is not a number")))?;
            if !v.is_finite() {
                return Err(parse_err(&features_path, line, format!("'{cell}' is not finite")));
            }
            values.push(v);
        }
        let w = values.len() - before;
        match width {
            None => width = Some(w),
            Some(expected) if expected != w => {
                return Err(parse_err(
                    &features_path,
                    line,
                    format!("expected {expected} columns, found {w}"),
                ))
            }
            _ => {}
        }
        rows += 1;
    }
    if rows != num_nodes {
        return Err(DatasetError::Invalid {
            file: features_path,
            msg: format!("{rows} feature rows for {num_nodes} labelled nodes"),
        });
    }
    let features = Array2::from_shape_vec((rows, width.unwrap_or(0)), values).expect("rows are rectangular");

    let edges_path = dir.join("edges.tsv");
    let mut raw = Vec::new();
    let mut self_loop_lines = 0;
    for (line, text) in content_lines(&read_text(&edges_path)?) {
        let mut cells = text.split(['\t', ' ']).filter(|c| !c.is_empty());
        let (Some(a), Some(b), None) = (cells.next(), cells.next(), cells.next()) else {
            return Err(parse_err(&edges_path, line, "expected two columns"));
        };
        let src = parse_index(&edges_path, line, a)?;
        let dst = parse_index(&edges_path, line, b)?;
        if src >= num_nodes || dst >= num_nodes {
            return Err(DatasetError::DanglingEdge {
                file: edges_path,
                line,
                src,
                dst,
                num_nodes,
            });
        }
        if src == dst {
            self_loop_lines += 1;
            continue;
        }
        raw.push((src, dst));
    }
    let (edges, duplicate_edges) = if meta.directed {
        let mut e = raw.clone();
        e.sort_unstable();
        e.dedup();
        let dropped = raw.len() - e.len();
        (e, dropped)
    } else {
        symmetrize(&raw)
    };
    if duplicate_edges > 0 {
        log::warn!("{}: dropped {duplicate_edges} duplicate edge lines", edges_path.display());
    }
    if self_loop_lines > 0 {
        log::warn!("{}: dropped {self_loop_lines} self-loop lines", edges_path.display());
    }

    let mut graph = Graph::new(num_nodes, &edges, features, labels, meta.num_classes)?;
    let splits_path = dir.join("splits.json");
    if splits_path.exists() {
        let splits: Splits = serde_json::from_str(&read_text(&splits_path)?)
            .map_err(|e| parse_err(&splits_path, e.line(), e.to_string()))?;
        graph = graph.with_splits(splits)?;
    }
    Ok(DatasetBundle {
        graph,
        name: meta.name,
        directed: meta.directed,
        duplicate_edges,
        self_loop_lines,
    })
}

fn write_file(path: &Path, contents: &str) -> Result<(), DatasetError> {
    fs::write(path, contents).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes the canonical form: undirected edges once with `src < dst`,
/// sorted; shortest round-trip float formatting.
pub fn write_dataset(bundle: &DatasetBundle, dir: &Path) -> Result<(), DatasetError> {
    fs::create_dir_all(dir).map_err(|source| DatasetError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let g = &bundle.graph;
    let mut edges: Vec<(usize, usize)> = g
        .edge_list()
        .into_iter()
        .filter(|&(a, b)| bundle.directed || a < b)
        .collect();
    edges.sort_unstable();
    let mut out = String::with_capacity(edges.len() * 10);
    for (a, b) in edges {
        out.push_str(&format!("{a}\t{b}\n"));
    }
    write_file(&dir.join("edges.tsv"), &out)?;

    let mut out = String::new();
    for row in g.features().rows() {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    write_file(&dir.join("features.csv"), &out)?;

    let out: String = g.labels().iter().map(|l| format!("{l}\n")).collect();
    write_file(&dir.join("labels.csv"), &out)?;

    let meta = Meta {
        directed: bundle.directed,
        num_classes: g.num_classes(),
        name: bundle.name.clone(),
    };
    write_file(
        &dir.join("meta.json"),
        &(serde_json::to_string_pretty(&meta).expect("plain struct") + "\n"),
    )?;
    if !g.splits().is_empty() {
        write_file(
            &dir.join("splits.json"),
            &(serde_json::to_string(g.splits()).expect("plain struct") + "\n"),
        )?;
    }
    Ok(())
}

/// Uniformly random disjoint partition. Validation and test sizes are
/// `floor(ratio · n)`; training takes the remainder.
pub fn make_split(num_nodes: usize, ratios: (f64, f64, f64), seed: u64) -> Result<Splits, DatasetError> {
    let invalid = |msg: String| DatasetError::Invalid {
        file: PathBuf::from("<split>"),
        msg,
    };
    if num_nodes < 3 {
        return Err(invalid(format!("cannot split {num_nodes} nodes three ways")));
    }
    let (tr, va, te) = ratios;
    if [tr, va, te].iter().any(|r| !(0.0..=1.0).contains(r)) || (tr + va + te - 1.0).abs() > 1e-9 {
        return Err(invalid(format!("ratios {tr}/{va}/{te} must be fractions summing to 1")));
    }
    let mut order: Vec<usize> = (0..num_nodes).collect();
    order.shuffle(&mut derived_rng(seed, 0x5EED_5B17));
    let n_val = (va * num_nodes as f64).floor() as usize;
    let n_test = (te * num_nodes as f64).floor() as usize;
    let n_train = num_nodes - n_val - n_test;
    let sorted = |s: &[usize]| {
        let mut v = s.to_vec();
        v.sort_unstable();
        v
    };
    Ok(Splits {
        train: sorted(&order[..n_train]),
        val: sorted(&order[n_train..n_train + n_val]),
        test: sorted(&order[n_train + n_val..]),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FeatureMode {
    /// One-hot block indicator plus uniform noise in `[-noise, noise]`.
    OneHotPlusNoise { noise: f64 },
    /// Uniform `[0, 1)` features carrying no label information.
    Noise { dims: usize },
}

/// Stochastic block model. Labels are block ids; splits are 60/20/20.
pub fn synth_sbm(
    blocks: &[usize],
    p_in: f64,
    p_out: f64,
    features: FeatureMode,
    seed: u64,
) -> Result<DatasetBundle, DatasetError> {
    let invalid = |msg: &str| DatasetError::Invalid {
        file: PathBuf::from("<sbm>"),
        msg: msg.to_string(),
    };
    if !(0.0..=1.0).contains(&p_in) || !(0.0..=1.0).contains(&p_out) {
        return Err(invalid("edge probabilities must be in [0, 1]"));
    }
    let labels: Vec<usize> = blocks
        .iter()
        .enumerate()
        .flat_map(|(b, &size)| std::iter::repeat_n(b, size))
        .collect();
    let n = labels.len();
    if n == 0 {
        return Err(invalid("no nodes"));
    }
    let mut rng = derived_rng(seed, 0x5B);
    let mut raw = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let p = if labels[i] == labels[j] { p_in } else { p_out };
            if rng.random::<f64>() < p {
                raw.push((i, j));
            }
        }
    }
    let (edges, _) = symmetrize(&raw);
    let x = match features {
        FeatureMode::OneHotPlusNoise { noise } => Array2::from_shape_fn((n, blocks.len()), |(i, k)| {
            let hot = if labels[i] == k { 1.0 } else { 0.0 };
            hot + if noise > 0.0 { rng.random_range(-noise..noise) } else { 0.0 }
        }),
        FeatureMode::Noise { dims } => Array2::from_shape_simple_fn((n, dims.max(1)), || rng.random::<f64>()),
    };
    let mut graph = Graph::new(n, &edges, x, labels, blocks.len().max(1))?;
    if n >= 3 {
        graph = graph.with_splits(make_split(n, (0.6, 0.2, 0.2), seed)?)?;
    }
    Ok(DatasetBundle {
        graph,
        name: "sbm".to_string(),
        directed: false,
        duplicate_edges: 0,
        self_loop_lines: 0,
    })
}

fn open_maybe_gz(path: &Path) -> Result<Box<dyn BufRead>, DatasetError> {
    if !path.exists() {
        return Err(DatasetError::MissingFile(path.to_path_buf()));
    }
    let file = fs::File::open(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let reader: Box<dyn Read> = if path.extension().is_some_and(|e| e == "gz") {
        Box::new(GzDecoder::new(file))
    } else {
        Box::new(file)
    };
    Ok(Box::new(BufReader::new(reader)))
}

/// Imports the LINQS citation format: `<id> <binary features..> <class>` per
/// paper and `<cited> <citing>` per citation. Classes are numbered in sorted
/// name order; citations to unknown papers are skipped. Plain or `.gz`.
pub fn import_linqs(content: &Path, cites: &Path, name: &str) -> Result<DatasetBundle, DatasetError> {
    let mut ids: HashMap<String, usize> = HashMap::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut class_names: Vec<String> = Vec::new();
    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| DatasetError::Io { path, source }
    };
    for (i, line) in open_maybe_gz(content)?.lines().enumerate() {
        let line = line.map_err(io_err(content))?;
        let cells: Vec<&str> = line.split_whitespace().collect();
        if cells.is_empty() {
            continue;
        }
        if cells.len() < 3 {
            return Err(parse_err(content, i + 1, "expected id, features and class"));
        }
        let feats = cells[1..cells.len() - 1]
            .iter()
            .map(|c| c.parse::<f64>().map_err(|_| parse_err(content, i + 1, format!("bad feature '{c}'"))))
            .collect::<Result<Vec<_>, _>>()?;
        if rows.first().is_some_and(|r| r.len() != feats.len()) {
            return Err(parse_err(content, i + 1, "feature count differs from the first row"));
        }
        if ids.insert(cells[0].to_string(), rows.len()).is_some() {
            return Err(parse_err(content, i + 1, format!("duplicate paper id {}", cells[0])));
        }
        rows.push(feats);
        class_names.push(cells[cells.len() - 1].to_string());
    }
    let mut classes: Vec<String> = class_names.clone();
    classes.sort();
    classes.dedup();
    let labels: Vec<usize> = class_names
        .iter()
        .map(|c| classes.binary_search(c).expect("collected above"))
        .collect();

    let mut raw = Vec::new();
    let mut unknown = 0;
    let mut self_loop_lines = 0;
    for (i, line) in open_maybe_gz(cites)?.lines().enumerate() {
        let line = line.map_err(io_err(cites))?;
        let cells: Vec<&str> = line.split_whitespace().collect();
        if cells.is_empty() {
            continue;
        }
        if cells.len() != 2 {
            return Err(parse_err(cites, i + 1, "expected two paper ids"));
        }
        match (ids.get(cells[0]), ids.get(cells[1])) {
            (Some(&a), Some(&b)) if a == b => self_loop_lines += 1,
            (Some(&a), Some(&b)) => raw.push((a, b)),
            _ => unknown += 1,
        }
    }
    if unknown > 0 {
        log::warn!("{}: skipped {unknown} citations to unknown papers", cites.display());
    }
    let (edges, duplicate_edges) = symmetrize(&raw);
    let n = rows.len();
    let width = rows.first().map_or(0, Vec::len);
    let x = Array2::from_shape_vec((n, width), rows.concat()).expect("rectangular");
    let graph = Graph::new(n, &edges, x, labels, classes.len())?;
    Ok(DatasetBundle {
        graph,
        name: name.to_string(),
        directed: false,
        duplicate_edges,
        self_loop_lines,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, text: &str) {
        fs::write(dir.join(name), text).unwrap();
    }

    fn toy(dir: &Path) {
        write(dir, "meta.json", r#"{"directed": false, "num_classes": 2, "name": "toy"}"#);
        write(dir, "edges.tsv", "# two nodes\n0\t1\n");
        write(dir, "features.csv", "1,0\n0,1\n");
        write(dir, "labels.csv", "0\n1\n");
    }

    #[test]
    fn two_node_toy() {
        let d = tempfile::tempdir().unwrap();
        toy(d.path());
        let b = load_dataset(d.path()).unwrap();
        assert_eq!(b.graph.num_nodes(), 2);
        assert_eq!(b.graph.edge_list(), vec![(0, 1), (1, 0)]);
        assert_eq!(b.num_edges(), 1);
        assert_eq!(b.duplicate_edges, 0);
    }

    #[test]
    fn duplicate_line_counted_once() {
        let d = tempfile::tempdir().unwrap();
        toy(d.path());
        write(d.path(), "edges.tsv", "0\t1\n0\t1\n");
        let b = load_dataset(d.path()).unwrap();
        assert_eq!(b.num_edges(), 1);
        assert_eq!(b.duplicate_edges, 1);
    }

    #[test]
    fn split_sizes_and_determinism() {
        let s = make_split(10, (0.6, 0.2, 0.2), 4).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (6, 2, 2));
        assert_eq!(s, make_split(10, (0.6, 0.2, 0.2), 4).unwrap());
        s.validate(10).unwrap();
        assert!(make_split(2, (0.6, 0.2, 0.2), 0).is_err());
        assert!(make_split(10, (0.6, 0.2, 0.3), 0).is_err());
    }

    #[test]
    fn sbm_extremes() {
        let b = synth_sbm(&[5, 5], 0.5, 0.0, FeatureMode::OneHotPlusNoise { noise: 0.1 }, 1).unwrap();
        for (i, j) in b.graph.edge_list() {
            assert_eq!(b.graph.labels()[i], b.graph.labels()[j]);
        }
        let b = synth_sbm(&[5, 5], 0.0, 0.5, FeatureMode::Noise { dims: 3 }, 1).unwrap();
        for (i, j) in b.graph.edge_list() {
            assert_ne!(b.graph.labels()[i], b.graph.labels()[j]);
        }
        assert_eq!(b.graph.num_features(), 3);
    }
}

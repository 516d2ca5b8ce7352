//! Sparse graph storage, symmetric normalization and per-layer edge masks.
//!
//! Every graph is stored as the CSR pattern of `A + I`: row `i` lists the
//! nodes `j` whose messages node `i` aggregates, so entry `(i, j)` is the
//! weight applied to `Z[j]` when computing row `i` of `Â·Z`. Edges are
//! addressed by their position in that CSR ordering ("edge index") and all
//! masks, gradients and adjacency values are flat vectors over it.

use std::ops::Range;
use std::sync::Arc;

use ndarray::Array2;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("graph has no nodes")]
    Empty,
    #[error("edge ({src}, {dst}) references a node outside 0..{num_nodes}")]
    NodeOutOfRange {
        src: usize,
        dst: usize,
        num_nodes: usize,
    },
    #[error("duplicate edge ({src}, {dst})")]
    DuplicateEdge { src: usize, dst: usize },
    #[error("explicit self-loop on node {0}; self-loops are added by augmentation")]
    ExplicitSelfLoop(usize),
    #[error("feature matrix has {rows} rows but the graph has {num_nodes} nodes")]
    FeatureRows { rows: usize, num_nodes: usize },
    #[error("label vector has {len} entries but the graph has {num_nodes} nodes")]
    LabelCount { len: usize, num_nodes: usize },
    #[error("label {label} of node {node} is outside 0..{num_classes}")]
    LabelOutOfRange {
        node: usize,
        label: usize,
        num_classes: usize,
    },
    #[error("split index {node} is outside 0..{num_nodes}")]
    SplitOutOfRange { node: usize, num_nodes: usize },
    #[error("node {0} appears in more than one split")]
    SplitOverlap(usize),
    #[error("mask has {got} entries but the graph has {expected} edges")]
    MaskLength { got: usize, expected: usize },
    #[error("layer {layer} is out of range for depth {depth}")]
    LayerOutOfRange { layer: usize, depth: usize },
    #[error("no node has a neighbour; homophily is undefined")]
    NoNeighbours,
}

/// CSR pattern of the self-loop-augmented adjacency, plus a column index
/// used by the transposed product in backprop.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgePattern {
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    row_idx: Vec<usize>,
    self_loop: Vec<usize>,
    // edges grouped by column, ordered by row inside each column
    col_ptr: Vec<usize>,
    col_edges: Vec<usize>,
}

impl EdgePattern {
    /// Builds the augmented pattern from directed `(dst_row, src_col)` pairs.
    /// Self-loops are appended for every node.
    fn build(num_nodes: usize, edges: &[(usize, usize)]) -> Result<Self, GraphError> {
        if num_nodes == 0 {
            return Err(GraphError::Empty);
        }
        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); num_nodes];
        for &(src, dst) in edges {
            if src >= num_nodes || dst >= num_nodes {
                return Err(GraphError::NodeOutOfRange {
                    src,
                    dst,
                    num_nodes,
                });
            }
            if src == dst {
                return Err(GraphError::ExplicitSelfLoop(src));
            }
            rows[src].push(dst);
        }
        let mut row_ptr = Vec::with_capacity(num_nodes + 1);
        let mut col_idx = Vec::with_capacity(edges.len() + num_nodes);
        let mut row_idx = Vec::with_capacity(edges.len() + num_nodes);
        let mut self_loop = Vec::with_capacity(num_nodes);
        row_ptr.push(0);
        for (i, row) in rows.iter_mut().enumerate() {
            row.push(i);
            row.sort_unstable();
            if let Some(w) = row.windows(2).find(|w| w[0] == w[1]) {
                return Err(GraphError::DuplicateEdge { src: i, dst: w[0] });
            }
            for &j in row.iter() {
                if j == i {
                    self_loop.push(col_idx.len());
                }
                col_idx.push(j);
                row_idx.push(i);
            }
            row_ptr.push(col_idx.len());
        }

        let mut col_ptr = vec![0usize; num_nodes + 1];
        for &j in &col_idx {
            col_ptr[j + 1] += 1;
        }
        for j in 0..num_nodes {
            col_ptr[j + 1] += col_ptr[j];
        }
        let mut fill = col_ptr.clone();
        let mut col_edges = vec![0usize; col_idx.len()];
        for (e, &j) in col_idx.iter().enumerate() {
            col_edges[fill[j]] = e;
            fill[j] += 1;
        }

        Ok(Self {
            row_ptr,
            col_idx,
            row_idx,
            self_loop,
            col_ptr,
            col_edges,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.row_ptr.len() - 1
    }

    /// Number of stored entries, self-loops included.
    pub fn num_edges(&self) -> usize {
        self.col_idx.len()
    }

    pub fn num_non_loop_edges(&self) -> usize {
        self.num_edges() - self.num_nodes()
    }

    /// Edge indices of row `i` (the entries node `i` aggregates over).
    pub fn row(&self, i: usize) -> Range<usize> {
        self.row_ptr[i]..self.row_ptr[i + 1]
    }

    /// Edge indices whose column is `j`, ordered by row.
    pub fn column(&self, j: usize) -> &[usize] {
        &self.col_edges[self.col_ptr[j]..self.col_ptr[j + 1]]
    }

    pub fn row_of(&self, e: usize) -> usize {
        self.row_idx[e]
    }

    pub fn col_of(&self, e: usize) -> usize {
        self.col_idx[e]
    }

    pub fn endpoints(&self, e: usize) -> (usize, usize) {
        (self.row_idx[e], self.col_idx[e])
    }

    pub fn self_loop(&self, i: usize) -> usize {
        self.self_loop[i]
    }

    pub fn is_self_loop(&self, e: usize) -> bool {
        self.row_idx[e] == self.col_idx[e]
    }

    pub fn find(&self, i: usize, j: usize) -> Option<usize> {
        let r = self.row(i);
        self.col_idx[r.clone()]
            .binary_search(&j)
            .ok()
            .map(|k| r.start + k)
    }

    /// Row degree in `A + I`.
    pub fn degree(&self, i: usize) -> usize {
        self.row_ptr[i + 1] - self.row_ptr[i]
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }
}

/// Row-compressed copy of the feature matrix; used for the input layer
/// product when features are sparse (bag-of-words style).
#[derive(Debug, Clone, PartialEq)]
pub struct SparseRows {
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
}

impl SparseRows {
    pub fn from_dense(m: &Array2<f64>) -> Self {
        let mut row_ptr = vec![0];
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        for row in m.rows() {
            for (k, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    cols.push(k);
                    vals.push(v);
                }
            }
            row_ptr.push(cols.len());
        }
        Self {
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }
}

/// Train/validation/test node sets.
#[derive(Debug, Clone, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Splits {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Splits {
    pub fn validate(&self, num_nodes: usize) -> Result<(), GraphError> {
        let mut seen = vec![false; num_nodes];
        for &node in self.train.iter().chain(&self.val).chain(&self.test) {
            if node >= num_nodes {
                return Err(GraphError::SplitOutOfRange { node, num_nodes });
            }
            if std::mem::replace(&mut seen[node], true) {
                return Err(GraphError::SplitOverlap(node));
            }
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.train.is_empty() && self.val.is_empty() && self.test.is_empty()
    }
}

/// An attributed, labelled graph. Immutable once built.
#[derive(Debug, Clone)]
pub struct Graph {
    pattern: Arc<EdgePattern>,
    features: Array2<f64>,
    sparse_features: SparseRows,
    labels: Vec<usize>,
    num_classes: usize,
    splits: Splits,
}

impl Graph {
    /// `edges` are directed `(i, j)` pairs meaning "node `i` aggregates from
    /// node `j`". For undirected data pass both directions (see
    /// [`symmetrize`]).
    pub fn new(
        num_nodes: usize,
        edges: &[(usize, usize)],
        features: Array2<f64>,
        labels: Vec<usize>,
        num_classes: usize,
    ) -> Result<Self, GraphError> {
        let pattern = EdgePattern::build(num_nodes, edges)?;
        if features.nrows() != num_nodes {
            return Err(GraphError::FeatureRows {
                rows: features.nrows(),
                num_nodes,
            });
        }
        if labels.len() != num_nodes {
            return Err(GraphError::LabelCount {
                len: labels.len(),
                num_nodes,
            });
        }
        if let Some((node, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= num_classes) {
            return Err(GraphError::LabelOutOfRange {
                node,
                label,
                num_classes,
            });
        }
        let sparse_features = SparseRows::from_dense(&features);
        Ok(Self {
            pattern: Arc::new(pattern),
            features,
            sparse_features,
            labels,
            num_classes,
            splits: Splits::default(),
        })
    }

    pub fn with_splits(mut self, splits: Splits) -> Result<Self, GraphError> {
        splits.validate(self.num_nodes())?;
        self.splits = splits;
        Ok(self)
    }

    pub fn num_nodes(&self) -> usize {
        self.pattern.num_nodes()
    }

    pub fn num_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn pattern(&self) -> &Arc<EdgePattern> {
        &self.pattern
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn sparse_features(&self) -> &SparseRows {
        &self.sparse_features
    }

    /// Fraction of nonzero feature entries.
    pub fn feature_density(&self) -> f64 {
        let total = self.features.len().max(1);
        self.sparse_features.nnz() as f64 / total as f64
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn splits(&self) -> &Splits {
        &self.splits
    }

    /// Non-self-loop neighbours of `i` (the columns of row `i`).
    pub fn neighbours(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.pattern
            .row(i)
            .map(|e| self.pattern.col_of(e))
            .filter(move |&j| j != i)
    }

    /// Directed non-self-loop edges in CSR order.
    pub fn edge_list(&self) -> Vec<(usize, usize)> {
        (0..self.pattern.num_edges())
            .filter(|&e| !self.pattern.is_self_loop(e))
            .map(|e| self.pattern.endpoints(e))
            .collect()
    }

    /// Same graph with a different feature matrix (shape must match).
    pub fn with_features(&self, features: Array2<f64>) -> Result<Self, GraphError> {
        if features.nrows() != self.num_nodes() {
            return Err(GraphError::FeatureRows {
                rows: features.nrows(),
                num_nodes: self.num_nodes(),
            });
        }
        let sparse_features = SparseRows::from_dense(&features);
        Ok(Self {
            features,
            sparse_features,
            ..self.clone()
        })
    }
}

/// Adds the reverse of every pair and drops repeats. Returns the directed
/// list and the number of repeated (already present) pairs that were
/// dropped.
pub fn symmetrize(edges: &[(usize, usize)]) -> (Vec<(usize, usize)>, usize) {
    let mut out: Vec<(usize, usize)> = edges
        .iter()
        .flat_map(|&(a, b)| [(a, b), (b, a)])
        .collect();
    out.sort_unstable();
    let before = out.len();
    out.dedup();
    // each undirected repeat leaves two copies behind
    let dropped = (before - out.len()) / 2;
    (out, dropped)
}

/// `Â = S^{-1/2} (A + I) S^{-1/2}` stored over the augmented pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedAdjacency {
    pattern: Arc<EdgePattern>,
    values: Vec<f64>,
}

/// Symmetric degree normalization with self-loops: entry `(i, j)` becomes
/// `1/sqrt(d_i d_j)` where `d` counts entries of `A + I`.
pub fn normalize(graph: &Graph) -> NormalizedAdjacency {
    let pattern = graph.pattern().clone();
    let values = (0..pattern.num_edges())
        .map(|e| {
            let (i, j) = pattern.endpoints(e);
            1.0 / ((pattern.degree(i) * pattern.degree(j)) as f64).sqrt()
        })
        .collect();
    NormalizedAdjacency { pattern, values }
}

impl NormalizedAdjacency {
    pub fn from_values(pattern: Arc<EdgePattern>, values: Vec<f64>) -> Result<Self, GraphError> {
        if values.len() != pattern.num_edges() {
            return Err(GraphError::MaskLength {
                got: values.len(),
                expected: pattern.num_edges(),
            });
        }
        Ok(Self { pattern, values })
    }

    pub fn pattern(&self) -> &Arc<EdgePattern> {
        &self.pattern
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Value at `(i, j)`, zero when the entry is not stored.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.pattern.find(i, j).map_or(0.0, |e| self.values[e])
    }

    /// Zeroes every entry whose mask bit is clear. Surviving values are
    /// copied unchanged.
    pub fn apply_mask(&self, mask: &[bool]) -> Result<Self, GraphError> {
        if mask.len() != self.values.len() {
            return Err(GraphError::MaskLength {
                got: mask.len(),
                expected: self.values.len(),
            });
        }
        let values = self
            .values
            .iter()
            .zip(mask)
            .map(|(&v, &keep)| if keep { v } else { 0.0 })
            .collect();
        Ok(Self {
            pattern: self.pattern.clone(),
            values,
        })
    }

    /// Recomputes `1/sqrt(d_i d_j)` from the surviving entries of `mask`
    /// (degrees counted per row, self-loop included). Masked entries are zero.
    pub fn renormalized(pattern: &Arc<EdgePattern>, mask: &[bool]) -> Result<Self, GraphError> {
        if mask.len() != pattern.num_edges() {
            return Err(GraphError::MaskLength {
                got: mask.len(),
                expected: pattern.num_edges(),
            });
        }
        let degree: Vec<usize> = (0..pattern.num_nodes())
            .map(|i| pattern.row(i).filter(|&e| mask[e]).count().max(1))
            .collect();
        let values = (0..pattern.num_edges())
            .map(|e| {
                if mask[e] {
                    let (i, j) = pattern.endpoints(e);
                    1.0 / ((degree[i] * degree[j]) as f64).sqrt()
                } else {
                    0.0
                }
            })
            .collect();
        Ok(Self {
            pattern: pattern.clone(),
            values,
        })
    }

    /// An entry counts as present when its value is nonzero.
    pub fn is_active(&self, e: usize) -> bool {
        self.values[e] != 0.0
    }
}

/// Per-layer survival bits over the augmented edge list plus the depth at
/// which each node was stopped.
///
/// Layers are 0-based (`0..depth`). Stop depths are 1-based: a node stopped
/// at depth `r` has its incoming non-self-loop entries cleared in layers
/// `r-1..depth`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerMaskSet {
    pattern: Arc<EdgePattern>,
    masks: Vec<Vec<bool>>,
    stop_depth: Vec<Option<usize>>,
}

/// Which invariant a [`LayerMaskSet`] breaks.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MaskViolation {
    #[error("edge {edge} is cleared at layer {layer} but set at deeper layer {deeper}")]
    NotDepthMonotone {
        edge: usize,
        layer: usize,
        deeper: usize,
    },
    #[error("self-loop of node {node} cleared at layer {layer}")]
    SelfLoopCleared { node: usize, layer: usize },
    #[error("node {node} stopped at depth {depth} keeps edge {edge} at layer {layer}")]
    StoppedRowAlive {
        node: usize,
        depth: usize,
        edge: usize,
        layer: usize,
    },
}

impl LayerMaskSet {
    /// All edges alive at every layer, nobody stopped.
    pub fn full(pattern: Arc<EdgePattern>, depth: usize) -> Self {
        let n = pattern.num_nodes();
        let m = pattern.num_edges();
        Self {
            masks: vec![vec![true; m]; depth],
            stop_depth: vec![None; n],
            pattern,
        }
    }

    pub fn depth(&self) -> usize {
        self.masks.len()
    }

    pub fn pattern(&self) -> &Arc<EdgePattern> {
        &self.pattern
    }

    pub fn layer(&self, layer: usize) -> &[bool] {
        &self.masks[layer]
    }

    pub fn layers(&self) -> &[Vec<bool>] {
        &self.masks
    }

    pub fn stop_depths(&self) -> &[Option<usize>] {
        &self.stop_depth
    }

    pub fn stop_depth(&self, node: usize) -> Option<usize> {
        self.stop_depth[node]
    }

    fn check_layer(&self, layer: usize) -> Result<(), GraphError> {
        if layer >= self.depth() {
            Err(GraphError::LayerOutOfRange {
                layer,
                depth: self.depth(),
            })
        } else {
            Ok(())
        }
    }

    /// Clears one entry at one layer. Self-loops are ignored. Returns whether
    /// the bit changed. Does not propagate.
    pub fn clear(&mut self, layer: usize, edge: usize) -> bool {
        if self.pattern.is_self_loop(edge) {
            return false;
        }
        std::mem::replace(&mut self.masks[layer][edge], false)
    }

    /// ANDs `mask[source_layer]` into every deeper layer.
    pub fn propagate_zeros(&mut self, source_layer: usize) -> Result<(), GraphError> {
        self.check_layer(source_layer)?;
        let (head, tail) = self.masks.split_at_mut(source_layer + 1);
        let src = &head[source_layer];
        for deeper in tail {
            for (bit, &keep) in deeper.iter_mut().zip(src) {
                *bit &= keep;
            }
        }
        Ok(())
    }

    /// Clears every non-self-loop entry of row `node` at layers
    /// `depth-1..` and records the stop. Returns `false` (no change) when
    /// the node was already stopped at the same or a shallower depth.
    pub fn stop_node(&mut self, node: usize, depth: usize) -> bool {
        assert!(
            (1..=self.depth()).contains(&depth),
            "stop depth {depth} outside 1..={}",
            self.depth()
        );
        if matches!(self.stop_depth[node], Some(r) if r <= depth) {
            return false;
        }
        for layer in depth - 1..self.depth() {
            for e in self.pattern.row(node) {
                if !self.pattern.is_self_loop(e) {
                    self.masks[layer][e] = false;
                }
            }
        }
        self.stop_depth[node] = Some(depth);
        true
    }

    pub fn surviving_non_loop(&self, layer: usize) -> usize {
        self.masks[layer]
            .iter()
            .enumerate()
            .filter(|&(e, &keep)| keep && !self.pattern.is_self_loop(e))
            .count()
    }

    /// Surviving non-self-loop entries over all non-self-loop entries.
    /// A graph without non-loop edges reports 1.0.
    pub fn edge_sparsity(&self, layer: usize) -> Result<f64, GraphError> {
        self.check_layer(layer)?;
        let total = self.pattern.num_non_loop_edges();
        if total == 0 {
            return Ok(1.0);
        }
        Ok(self.surviving_non_loop(layer) as f64 / total as f64)
    }

    /// Fraction of nodes that still receive at least one non-self-loop
    /// message at `layer`.
    pub fn node_sparsity(&self, layer: usize) -> Result<f64, GraphError> {
        self.check_layer(layer)?;
        let mask = &self.masks[layer];
        let n = self.pattern.num_nodes();
        let alive = (0..n)
            .filter(|&i| {
                self.pattern
                    .row(i)
                    .any(|e| mask[e] && !self.pattern.is_self_loop(e))
            })
            .count();
        Ok(alive as f64 / n as f64)
    }

    pub fn check_invariants(&self) -> Result<(), MaskViolation> {
        let depth = self.depth();
        for layer in 0..depth {
            for node in 0..self.pattern.num_nodes() {
                if !self.masks[layer][self.pattern.self_loop(node)] {
                    return Err(MaskViolation::SelfLoopCleared { node, layer });
                }
            }
            if layer + 1 < depth {
                let (cur, next) = (&self.masks[layer], &self.masks[layer + 1]);
                if let Some(edge) = (0..cur.len()).find(|&e| !cur[e] && next[e]) {
                    return Err(MaskViolation::NotDepthMonotone {
                        edge,
                        layer,
                        deeper: layer + 1,
                    });
                }
            }
        }
        for (node, stop) in self.stop_depth.iter().enumerate() {
            if let Some(r) = *stop {
                for layer in r - 1..depth {
                    if let Some(edge) = self
                        .pattern
                        .row(node)
                        .find(|&e| !self.pattern.is_self_loop(e) && self.masks[layer][e])
                    {
                        return Err(MaskViolation::StoppedRowAlive {
                            node,
                            depth: r,
                            edge,
                            layer,
                        });
                    }
                }
            }
        }
        Ok(())
    }
}

/// Mean over nodes of the share of neighbours carrying the node's label.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homophily {
    pub ratio: f64,
    /// Nodes without any neighbour, left out of the mean.
    pub excluded: usize,
}

pub fn homophily_ratio(graph: &Graph) -> Result<Homophily, GraphError> {
    let labels = graph.labels();
    let mut sum = 0.0;
    let mut counted = 0usize;
    let mut excluded = 0usize;
    for i in 0..graph.num_nodes() {
        let (same, total) = graph
            .neighbours(i)
            .fold((0usize, 0usize), |(s, t), j| {
                (s + usize::from(labels[j] == labels[i]), t + 1)
            });
        if total == 0 {
            excluded += 1;
            continue;
        }
        sum += same as f64 / total as f64;
        counted += 1;
    }
    if counted == 0 {
        return Err(GraphError::NoNeighbours);
    }
    if excluded > 0 {
        log::warn!("homophily: {excluded} node(s) without neighbours excluded");
    }
    Ok(Homophily {
        ratio: sum / counted as f64,
        excluded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn star() -> Graph {
        let (edges, _) = symmetrize(&[(0, 1), (0, 2), (0, 3)]);
        Graph::new(4, &edges, Array2::zeros((4, 1)), vec![0; 4], 1).unwrap()
    }

    fn path(n: usize, labels: Vec<usize>) -> Graph {
        let pairs: Vec<_> = (0..n - 1).map(|i| (i, i + 1)).collect();
        let (edges, _) = symmetrize(&pairs);
        Graph::new(n, &edges, Array2::zeros((n, 1)), labels, 2).unwrap()
    }

    #[test]
    fn single_isolated_node_is_identity() {
        let g = Graph::new(1, &[], Array2::zeros((1, 1)), vec![0], 1).unwrap();
        let a = normalize(&g);
        assert_eq!(a.values(), &[1.0]);
    }

    #[test]
    fn single_edge_gives_halves() {
        let (edges, _) = symmetrize(&[(0, 1)]);
        let g = Graph::new(2, &edges, Array2::zeros((2, 1)), vec![0, 0], 1).unwrap();
        let a = normalize(&g);
        assert_eq!(a.values(), &[0.5; 4]);
    }

    #[test]
    fn star_values() {
        let a = normalize(&star());
        assert_eq!(a.get(0, 0), 0.25);
        for leaf in 1..4 {
            assert!((a.get(0, leaf) - 0.353_553_390_593_273_8).abs() < 1e-15);
            assert!((a.get(leaf, 0) - 0.353_553_390_593_273_8).abs() < 1e-15);
            assert_eq!(a.get(leaf, leaf), 0.5);
        }
    }

    #[test]
    fn rejects_duplicates_and_out_of_range() {
        let err = Graph::new(3, &[(0, 1), (0, 1)], Array2::zeros((3, 1)), vec![0; 3], 1);
        assert_eq!(err.unwrap_err(), GraphError::DuplicateEdge { src: 0, dst: 1 });
        let err = Graph::new(3, &[(0, 5)], Array2::zeros((3, 1)), vec![0; 3], 1);
        assert!(matches!(err, Err(GraphError::NodeOutOfRange { dst: 5, .. })));
        let err = Graph::new(0, &[], Array2::zeros((0, 1)), vec![], 1);
        assert_eq!(err.unwrap_err(), GraphError::Empty);
    }

    #[test]
    fn every_node_gets_one_self_loop() {
        let g = star();
        let p = g.pattern();
        for i in 0..4 {
            let loops = p.row(i).filter(|&e| p.is_self_loop(e)).count();
            assert_eq!(loops, 1);
            assert_eq!(p.endpoints(p.self_loop(i)), (i, i));
        }
        assert!(p.row_ptr().windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn column_index_matches_rows() {
        let g = star();
        let p = g.pattern();
        for j in 0..4 {
            for &e in p.column(j) {
                assert_eq!(p.col_of(e), j);
            }
        }
        let total: usize = (0..4).map(|j| p.column(j).len()).sum();
        assert_eq!(total, p.num_edges());
    }

    #[test]
    fn mask_application() {
        let g = star();
        let a = normalize(&g);
        let ones = vec![true; a.values().len()];
        assert_eq!(a.apply_mask(&ones).unwrap(), a);

        let diag_only: Vec<bool> = (0..a.values().len())
            .map(|e| g.pattern().is_self_loop(e))
            .collect();
        let d = a.apply_mask(&diag_only).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let expect = if i == j { a.get(i, i) } else { 0.0 };
                assert_eq!(d.get(i, j), expect);
            }
        }

        let mut one_off = ones.clone();
        one_off[g.pattern().find(0, 1).unwrap()] = false;
        let m = a.apply_mask(&one_off).unwrap();
        assert_eq!(m.get(0, 1), 0.0);
        assert_eq!(m.get(1, 0), a.get(1, 0));

        assert!(matches!(
            a.apply_mask(&[true]),
            Err(GraphError::MaskLength { got: 1, .. })
        ));
    }

    #[test]
    fn propagation_rules() {
        let g = path(4, vec![0, 1, 0, 1]);
        let p = g.pattern().clone();
        let e = p.find(1, 2).unwrap();

        let mut masks = LayerMaskSet::full(p.clone(), 5);
        masks.clear(4, e);
        let before = masks.clone();
        masks.propagate_zeros(4).unwrap();
        assert_eq!(masks, before);

        let mut masks = LayerMaskSet::full(p.clone(), 5);
        masks.clear(1, e);
        masks.propagate_zeros(1).unwrap();
        assert!(masks.layer(0)[e]);
        for l in 1..5 {
            assert!(!masks.layer(l)[e]);
        }
        let once = masks.clone();
        masks.propagate_zeros(1).unwrap();
        assert_eq!(masks, once);
        assert!(masks.check_invariants().is_ok());
        assert!(masks.propagate_zeros(5).is_err());
    }

    #[test]
    fn self_loops_cannot_be_cleared() {
        let g = star();
        let mut masks = LayerMaskSet::full(g.pattern().clone(), 2);
        assert!(!masks.clear(0, g.pattern().self_loop(2)));
        assert!(masks.check_invariants().is_ok());
    }

    #[test]
    fn sparsity_fractions() {
        // 5-node path has 8 directed non-loop edges; add a chord for 10
        let (edges, _) = symmetrize(&[(0, 1), (1, 2), (2, 3), (3, 4), (0, 4)]);
        let g = Graph::new(5, &edges, Array2::zeros((5, 1)), vec![0; 5], 1).unwrap();
        let p = g.pattern().clone();
        assert_eq!(p.num_non_loop_edges(), 10);
        let mut masks = LayerMaskSet::full(p.clone(), 1);
        assert_eq!(masks.edge_sparsity(0).unwrap(), 1.0);
        assert_eq!(masks.node_sparsity(0).unwrap(), 1.0);
        let non_loop: Vec<usize> = (0..p.num_edges()).filter(|&e| !p.is_self_loop(e)).collect();
        for &e in &non_loop[..6] {
            masks.clear(0, e);
        }
        assert!((masks.edge_sparsity(0).unwrap() - 0.4).abs() < 1e-15);
        for &e in &non_loop[6..] {
            masks.clear(0, e);
        }
        assert_eq!(masks.edge_sparsity(0).unwrap(), 0.0);
        assert_eq!(masks.node_sparsity(0).unwrap(), 0.0);
    }

    #[test]
    fn node_sparsity_half() {
        let (edges, _) = symmetrize(&[(0, 1), (1, 2), (2, 3), (3, 0)]);
        let g = Graph::new(4, &edges, Array2::zeros((4, 1)), vec![0; 4], 1).unwrap();
        let mut masks = LayerMaskSet::full(g.pattern().clone(), 3);
        assert!(masks.stop_node(0, 1));
        assert!(masks.stop_node(1, 1));
        assert_eq!(masks.node_sparsity(0).unwrap(), 0.5);
        assert!(masks.check_invariants().is_ok());
    }

    #[test]
    fn stop_node_respects_depth_and_self_loops() {
        let g = star();
        let p = g.pattern().clone();
        let mut masks = LayerMaskSet::full(p.clone(), 5);
        assert!(masks.stop_node(0, 2));
        for l in 0..5 {
            let alive = p.row(0).filter(|&e| masks.layer(l)[e]).count();
            let expect = if l < 1 { 4 } else { 1 };
            assert_eq!(alive, expect, "layer {l}");
            assert!(masks.layer(l)[p.self_loop(0)]);
        }
        // deeper stop on an already-stopped node is ignored
        assert!(!masks.stop_node(0, 4));
        assert_eq!(masks.stop_depth(0), Some(2));

        let mut masks = LayerMaskSet::full(p.clone(), 5);
        masks.stop_node(1, 5);
        for l in 0..4 {
            assert!(masks.layer(l)[p.find(1, 0).unwrap()]);
        }
        assert!(!masks.layer(4)[p.find(1, 0).unwrap()]);
    }

    #[test]
    fn homophily_extremes() {
        let g = path(6, vec![0; 6]);
        assert_eq!(homophily_ratio(&g).unwrap().ratio, 1.0);
        let g = path(6, vec![0, 1, 0, 1, 0, 1]);
        assert_eq!(homophily_ratio(&g).unwrap().ratio, 0.0);
    }

    #[test]
    fn homophily_excludes_isolated() {
        let (edges, _) = symmetrize(&[(0, 1)]);
        let g = Graph::new(3, &edges, Array2::zeros((3, 1)), vec![0, 0, 1], 2).unwrap();
        let h = homophily_ratio(&g).unwrap();
        assert_eq!(h.ratio, 1.0);
        assert_eq!(h.excluded, 1);
        let lonely = Graph::new(2, &[], Array2::zeros((2, 1)), vec![0, 1], 2).unwrap();
        assert_eq!(homophily_ratio(&lonely), Err(GraphError::NoNeighbours));
    }

    #[test]
    fn symmetrize_counts_repeats() {
        let (e, dropped) = symmetrize(&[(0, 1), (1, 0), (2, 3)]);
        assert_eq!(e, vec![(0, 1), (1, 0), (2, 3), (3, 2)]);
        assert_eq!(dropped, 1);
    }

    #[test]
    fn splits_must_be_disjoint() {
        let s = Splits {
            train: vec![0, 1],
            val: vec![1],
            test: vec![],
        };
        assert_eq!(s.validate(3), Err(GraphError::SplitOverlap(1)));
        let s = Splits {
            train: vec![7],
            ..Default::default()
        };
        assert!(matches!(s.validate(3), Err(GraphError::SplitOutOfRange { .. })));
    }
}

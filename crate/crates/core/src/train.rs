//! The shared training loop every method drives.

use std::time::Instant;

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{
    self, backward_impl, cosine_distance_per_node, derived_rng, forward_parallel, init_params, AdjacencyGrads,
    EngineError, ForwardTape, Gradients, ModelConfig, ModelState, NodeDistances,
};
use crate::graph::{normalize, Graph, GraphError, LayerMaskSet, MaskViolation, NormalizedAdjacency};
use crate::report::{BestEpoch, DistanceRecord, EpochRecord, LayerSparsity, PruneEvent, RunReport, StopHistogram};

const DROPEDGE_STREAM: u64 = 0xED6E;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    /// Forces sequential kernels. Results are bit-identical either way; the
    /// flag exists so a run can promise it.
    pub deterministic: bool,
    /// Recompute the symmetric normalization from surviving entries instead
    /// of keeping the original values.
    pub renormalize: bool,
    /// Diagnostic distance probe every this many epochs (0 = off).
    pub probe_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 1000,
            lr: 0.01,
            deterministic: false,
            renormalize: false,
            probe_every: 50,
        }
    }
}

impl TrainConfig {
    pub fn with_epochs(mut self, epochs: usize) -> Self {
        self.epochs = epochs;
        self
    }

    pub fn validate(&self) -> Result<(), RunError> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(RunError::Config("lr must be positive".into()));
        }
        Ok(())
    }
}

/// Per-epoch random edge dropping on the training adjacency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DropEdgeConfig {
    pub drop_rate: f64,
    pub seed: u64,
    /// Resample independently for every layer instead of once per epoch.
    pub per_layer: bool,
}

impl DropEdgeConfig {
    pub fn new(drop_rate: f64, seed: u64) -> Self {
        Self {
            drop_rate,
            seed,
            per_layer: false,
        }
    }

    pub fn validate(&self) -> Result<(), RunError> {
        if !(0.0..=1.0).contains(&self.drop_rate) {
            return Err(RunError::Config("drop rate must be in [0, 1]".into()));
        }
        Ok(())
    }

    /// Keep-bits for one epoch (and layer, when sampling per layer).
    pub(crate) fn sample_keep(&self, adj: &NormalizedAdjacency, epoch: usize, layer: usize) -> Vec<bool> {
        let stream = (epoch as u64) << 16 | if self.per_layer { layer as u64 } else { 0 };
        let mut rng = derived_rng(self.seed ^ engine::splitmix64(DROPEDGE_STREAM), stream);
        let pattern = adj.pattern();
        (0..pattern.num_edges())
            .map(|e| pattern.is_self_loop(e) || rng.random::<f64>() >= self.drop_rate)
            .collect()
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("numerical failure at epoch {epoch}: {source}")]
    Numerical { epoch: usize, source: EngineError },
    #[error("epoch {epoch}: {source}")]
    Engine { epoch: usize, source: EngineError },
    /// A pruner left the masks in an invalid state. Always a bug.
    #[error("mask invariant broken after pruning at epoch {epoch}: {source}")]
    Mask { epoch: usize, source: MaskViolation },
}

impl RunError {
    pub(crate) fn engine(epoch: usize, source: EngineError) -> Self {
        match source {
            EngineError::NonFinite { .. } | EngineError::NonFiniteGradient { .. } => {
                RunError::Numerical { epoch, source }
            }
            EngineError::InvalidConfig(msg) => RunError::Config(msg),
            source => RunError::Engine { epoch, source },
        }
    }
}

/// Masks plus the log of every pruning action taken on them.
#[derive(Debug, Clone, PartialEq)]
pub struct PruneState {
    pub masks: LayerMaskSet,
    /// Layer (0-based) the layer-wise controller will prune next.
    pub next_layer_to_prune: Option<usize>,
    pub events: Vec<PruneEvent>,
}

impl PruneState {
    pub fn full(graph: &Graph, depth: usize) -> Self {
        Self {
            masks: LayerMaskSet::full(graph.pattern().clone(), depth),
            next_layer_to_prune: None,
            events: Vec::new(),
        }
    }

    pub fn stop_depth_report(&self) -> StopHistogram {
        StopHistogram::from_masks(&self.masks)
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub state: ModelState,
    pub prune: PruneState,
    pub report: RunReport,
}

pub(crate) struct Session<'g> {
    pub(crate) graph: &'g Graph,
    base: NormalizedAdjacency,
    pub(crate) state: ModelState,
    init: Vec<Array2<f64>>,
    pub(crate) prune: PruneState,
    adj: Vec<NormalizedAdjacency>,
    /// Real-valued per-entry multiplier applied on top of the masks.
    pub(crate) edge_scale: Option<Vec<f64>>,
    dropedge: Option<DropEdgeConfig>,
    pub(crate) opts: TrainConfig,
    pub(crate) epoch: usize,
    report: RunReport,
    best: Option<BestEpoch>,
    probe_cache: Option<(usize, Vec<NodeDistances>)>,
    started: Instant,
}

impl<'g> Session<'g> {
    pub(crate) fn new(graph: &'g Graph, model: &ModelConfig, opts: &TrainConfig) -> Result<Self, RunError> {
        opts.validate()?;
        if graph.splits().train.is_empty() {
            return Err(RunError::Config("training split is empty".into()));
        }
        let state = init_params(model).map_err(|e| RunError::engine(0, e))?;
        let base = normalize(graph);
        let prune = PruneState::full(graph, model.depth);
        let mut s = Self {
            graph,
            init: state.params().to_vec(),
            state,
            adj: Vec::new(),
            base,
            prune,
            edge_scale: None,
            dropedge: None,
            opts: opts.clone(),
            epoch: 0,
            report: RunReport::default(),
            best: None,
            probe_cache: None,
            started: Instant::now(),
        };
        s.refresh()?;
        Ok(s)
    }

    pub(crate) fn with_dropedge(mut self, cfg: Option<DropEdgeConfig>) -> Self {
        self.dropedge = cfg.filter(|c| c.drop_rate > 0.0);
        self
    }

    fn parallel(&self) -> bool {
        !self.opts.deterministic
    }

    pub(crate) fn depth(&self) -> usize {
        self.state.config().depth
    }

    pub(crate) fn base(&self) -> &NormalizedAdjacency {
        &self.base
    }

    /// Rebuilds the per-layer adjacency after the masks or the edge scale
    /// changed.
    pub(crate) fn refresh(&mut self) -> Result<(), RunError> {
        let mut adj = Vec::with_capacity(self.depth());
        for mask in self.prune.masks.layers() {
            let mut a = if self.opts.renormalize {
                NormalizedAdjacency::renormalized(self.base.pattern(), mask)?
            } else {
                self.base.apply_mask(mask)?
            };
            if let Some(scale) = &self.edge_scale {
                for (v, s) in a.values_mut().iter_mut().zip(scale) {
                    *v *= s;
                }
            }
            adj.push(a);
        }
        self.adj = adj;
        self.probe_cache = None;
        Ok(())
    }

    fn training_adjacency(&self) -> Option<Vec<NormalizedAdjacency>> {
        let cfg = self.dropedge?;
        let mut shared: Option<Vec<bool>> = None;
        let layers = self
            .adj
            .iter()
            .enumerate()
            .map(|(l, a)| {
                let keep = if cfg.per_layer {
                    cfg.sample_keep(a, self.epoch, l)
                } else {
                    shared
                        .get_or_insert_with(|| cfg.sample_keep(a, self.epoch, 0))
                        .clone()
                };
                a.apply_mask(&keep).expect("keep bits cover the pattern")
            })
            .collect();
        Some(layers)
    }

    fn metrics(&self, tape: &ForwardTape, train_loss: f64) -> EpochRecord {
        let splits = self.graph.splits();
        EpochRecord {
            epoch: self.epoch,
            train_loss,
            train_acc: engine::accuracy(tape, self.graph, &splits.train).unwrap_or(0.0),
            val_acc: engine::accuracy(tape, self.graph, &splits.val),
            test_acc: engine::accuracy(tape, self.graph, &splits.test),
        }
    }

    /// One full-batch epoch: forward, backward, Adam. Metrics come from the
    /// weights as they were at the start of the epoch.
    pub(crate) fn step(&mut self, adj_grads: AdjacencyGrads) -> Result<Gradients, RunError> {
        self.epoch += 1;
        let epoch = self.epoch;
        let err = |e| RunError::engine(epoch, e);
        let sampled = self.training_adjacency();
        let train_adj = sampled.as_deref().unwrap_or(&self.adj);
        let parallel = self.parallel();
        let tape = forward_parallel(self.graph, train_adj, &self.state, true).map_err(err)?;
        let train = &self.graph.splits().train;
        let (loss, _) = engine::loss_and_accuracy(&tape, self.graph, train).map_err(err)?;
        let stochastic = sampled.is_some() || self.state.config().dropout > 0.0;
        let record = if stochastic {
            let eval = forward_parallel(self.graph, &self.adj, &self.state, false).map_err(err)?;
            self.metrics(&eval, loss)
        } else {
            self.metrics(&tape, loss)
        };
        let grads =
            backward_impl(&tape, self.graph, train_adj, &self.state, train, adj_grads, parallel).map_err(err)?;
        self.state.adam_step(&grads, self.opts.lr).map_err(err)?;

        let better = match (self.best, record.val_acc) {
            (None, _) => true,
            (Some(b), Some(v)) => b.val_acc.is_none_or(|bv| v > bv),
            (Some(_), None) => false,
        };
        if better {
            self.best = Some(BestEpoch {
                epoch,
                val_acc: record.val_acc,
                test_acc: record.test_acc,
            });
        }
        self.report.epochs.push(record);
        if self.opts.probe_every > 0 && epoch % self.opts.probe_every == 0 {
            self.probe()?;
        }
        Ok(grads)
    }

    /// Cosine distances at every layer for the current weights and
    /// (undropped) masked adjacency. Each distinct probe is logged once.
    pub(crate) fn probe(&mut self) -> Result<&[NodeDistances], RunError> {
        let fresh = matches!(&self.probe_cache, Some((e, _)) if *e == self.epoch);
        if !fresh {
            let epoch = self.epoch;
            let tape = forward_parallel(self.graph, &self.adj, &self.state, false)
                .map_err(|e| RunError::engine(epoch, e))?;
            let dists: Vec<NodeDistances> = (0..self.depth())
                .map(|l| cosine_distance_per_node(&tape, l))
                .collect();
            for (l, d) in dists.iter().enumerate() {
                self.report.zero_norm_rows += d.zero_norm;
                self.report.distances.push(DistanceRecord {
                    epoch,
                    layer: l + 1,
                    mean_distance: d.mean(),
                    zero_norm: d.zero_norm,
                });
            }
            self.probe_cache = Some((epoch, dists));
        }
        Ok(&self.probe_cache.as_ref().expect("just filled").1)
    }

    /// Forgets the best-validation epoch so far (a new training phase
    /// starts).
    pub(crate) fn begin_phase(&mut self) {
        self.best = None;
    }

    /// Fresh weights from `seed`; optimizer state cleared.
    pub(crate) fn reinit(&mut self, seed: u64) -> Result<(), RunError> {
        let cfg = self.state.config().clone().with_seed(seed);
        self.state = init_params(&cfg).map_err(|e| RunError::engine(self.epoch, e))?;
        self.init = self.state.params().to_vec();
        self.probe_cache = None;
        Ok(())
    }

    /// Back to the initial weights; optimizer state cleared.
    pub(crate) fn rewind(&mut self) {
        self.state.reset_to(&self.init);
        self.probe_cache = None;
    }

    /// Records a prune event and re-checks the mask invariants.
    pub(crate) fn log_event(
        &mut self,
        layer: usize,
        kind: crate::report::EventKind,
        count: usize,
    ) -> Result<(), RunError> {
        self.prune.events.push(PruneEvent {
            epoch: self.epoch,
            layer: layer + 1,
            kind,
            count,
        });
        self.prune
            .masks
            .check_invariants()
            .map_err(|source| RunError::Mask { epoch: self.epoch, source })
    }

    pub(crate) fn finish(mut self) -> Result<RunOutput, RunError> {
        let masks = &self.prune.masks;
        self.report.sparsity = (0..masks.depth())
            .map(|l| {
                Ok(LayerSparsity {
                    layer: l + 1,
                    node_sparsity: masks.node_sparsity(l)?,
                    edge_sparsity: masks.edge_sparsity(l)?,
                })
            })
            .collect::<Result<_, GraphError>>()?;
        self.report.stops = StopHistogram::from_masks(masks);
        self.report.events = self.prune.events.clone();
        self.report.best = self.best;
        self.report.wall_clock_secs = self.started.elapsed().as_secs_f64();
        Ok(RunOutput {
            state: self.state,
            prune: self.prune,
            report: self.report,
        })
    }
}

/// Plain training on the full graph.
pub fn train_unpruned(graph: &Graph, model: &ModelConfig, opts: &TrainConfig) -> Result<RunOutput, RunError> {
    let mut s = Session::new(graph, model, opts)?;
    for _ in 0..opts.epochs {
        s.step(AdjacencyGrads::None)?;
    }
    s.finish()
}

/// Trains on fixed masks (e.g. produced by a one-off pruner).
pub fn train_with_masks(
    graph: &Graph,
    model: &ModelConfig,
    opts: &TrainConfig,
    masks: LayerMaskSet,
) -> Result<RunOutput, RunError> {
    if masks.depth() != model.depth || masks.pattern().num_edges() != graph.pattern().num_edges() {
        return Err(RunError::Config("mask set does not match graph and depth".into()));
    }
    let mut s = Session::new(graph, model, opts)?;
    s.prune.masks = masks;
    s.refresh()?;
    for _ in 0..opts.epochs {
        s.step(AdjacencyGrads::None)?;
    }
    s.finish()
}

//! Layer-wise adjacency pruning controllers.
//!
//! SnoHv1 removes the entries with the smallest accumulated `|∂L/∂Â|`,
//! deepest layer first. SnoHv2 stops a node once its pre- and
//! post-aggregation representations are nearly parallel, clearing its row
//! from that layer down.

use serde::{Deserialize, Serialize};

use crate::engine::{AdjacencyGrads, ModelConfig, NodeDistances};
use crate::graph::{Graph, LayerMaskSet};
use crate::report::EventKind;
use crate::train::{DropEdgeConfig, PruneState, RunError, RunOutput, Session, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    OneShot,
    Iterative,
    Reinit,
}

impl std::str::FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "oneshot" | "one-shot" | "o" => Ok(Scheme::OneShot),
            "iterative" | "it" => Ok(Scheme::Iterative),
            "reinit" | "rei" => Ok(Scheme::Reinit),
            other => Err(format!("unknown scheme '{other}' (oneshot, iterative, reinit)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnoHv1Config {
    /// Percent of surviving entries removed per layer.
    pub prune_rate: f64,
    /// Epochs between prune events; also the gradient accumulation window.
    pub window: usize,
    pub scheme: Scheme,
    pub iterative_rounds: usize,
    pub reinit_epochs: usize,
}

impl Default for SnoHv1Config {
    fn default() -> Self {
        Self {
            prune_rate: 30.0,
            window: 30,
            scheme: Scheme::OneShot,
            iterative_rounds: 3,
            reinit_epochs: 300,
        }
    }
}

impl SnoHv1Config {
    pub fn validate(&self, depth: usize, epochs: usize) -> Result<(), RunError> {
        if !(self.prune_rate > 0.0 && self.prune_rate < 100.0) {
            return Err(RunError::Config("prune rate must be in (0, 100)".into()));
        }
        if self.window == 0 {
            return Err(RunError::Config("prune window must be at least 1".into()));
        }
        match self.scheme {
            Scheme::OneShot | Scheme::Iterative => {
                let events = depth * self.rounds();
                if events * self.window > epochs {
                    return Err(RunError::Config(format!(
                        "{events} prune events every {} epochs do not fit in {epochs} epochs",
                        self.window
                    )));
                }
            }
            Scheme::Reinit => {
                if self.reinit_epochs < self.window {
                    return Err(RunError::Config("reinit epochs must cover the prune window".into()));
                }
            }
        }
        Ok(())
    }

    fn rounds(&self) -> usize {
        match self.scheme {
            Scheme::Iterative => self.iterative_rounds.max(1),
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Threshold {
    /// Stop when the distance falls below `rho`.
    Absolute(f64),
    /// Stop when the distance falls below `percent`% of the node's
    /// first-layer distance.
    Relative(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnoHv2Config {
    pub threshold: Threshold,
    pub check_every: usize,
    pub warmup: usize,
}

impl SnoHv2Config {
    pub fn absolute(rho: f64) -> Self {
        Self {
            threshold: Threshold::Absolute(rho),
            check_every: 30,
            warmup: 50,
        }
    }

    /// Suggested `rho` for a given depth.
    pub fn default_rho(depth: usize) -> f64 {
        match depth {
            0..=8 => 0.2,
            9..=16 => 0.1,
            _ => 0.05,
        }
    }

    pub fn validate(&self) -> Result<(), RunError> {
        match self.threshold {
            Threshold::Absolute(rho) if !(rho >= 0.0) => {
                return Err(RunError::Config("rho must be non-negative".into()))
            }
            Threshold::Relative(p) if !(p > 0.0 && p <= 100.0) => {
                return Err(RunError::Config("relative threshold must be in (0, 100]".into()))
            }
            _ => {}
        }
        if self.check_every == 0 {
            return Err(RunError::Config("check interval must be at least 1".into()));
        }
        Ok(())
    }

    /// Whether a probe is due after `epoch` updates.
    pub fn is_check_epoch(&self, epoch: usize) -> bool {
        epoch >= self.warmup && (epoch - self.warmup) % self.check_every == 0
    }
}

/// Removes `floor(p/100 · surviving)` non-self-loop entries of `layer` with
/// the smallest accumulated score (ties: lower edge index first), then
/// propagates the zeros to deeper layers. Returns the removed edges.
pub fn snohv1_prune_layer(
    accum: &[f64],
    masks: &mut LayerMaskSet,
    layer: usize,
    prune_rate: f64,
) -> Result<Vec<usize>, RunError> {
    let count = {
        let surviving = masks.surviving_non_loop(layer);
        (prune_rate / 100.0 * surviving as f64).floor() as usize
    };
    snohv1_remove(accum, masks, layer, count)
}

fn snohv1_remove(accum: &[f64], masks: &mut LayerMaskSet, layer: usize, count: usize) -> Result<Vec<usize>, RunError> {
    let pattern = masks.pattern().clone();
    if accum.len() != pattern.num_edges() {
        return Err(RunError::Config("gradient accumulator does not cover the pattern".into()));
    }
    let mut candidates: Vec<usize> = (0..pattern.num_edges())
        .filter(|&e| masks.layer(layer)[e] && !pattern.is_self_loop(e))
        .collect();
    candidates.sort_by(|&a, &b| accum[a].total_cmp(&accum[b]).then(a.cmp(&b)));
    candidates.truncate(count);
    for &e in &candidates {
        masks.clear(layer, e);
    }
    masks.propagate_zeros(layer)?;
    candidates.sort_unstable();
    Ok(candidates)
}

/// Splits `total` removals into `rounds` near-equal integer parts.
fn split_count(total: usize, rounds: usize) -> Vec<usize> {
    (0..rounds)
        .map(|i| total * (i + 1) / rounds - total * i / rounds)
        .collect()
}

fn accumulate(accum: &mut [f64], grad: Option<&Vec<f64>>) {
    if let Some(g) = grad {
        for (a, v) in accum.iter_mut().zip(g) {
            *a += v.abs();
        }
    }
}

fn log_removal(session: &mut Session<'_>, layer: usize, removed: usize) -> Result<(), RunError> {
    let kind = if removed == 0 {
        log::warn!("no prunable entries at layer {}", layer + 1);
        EventKind::Skipped
    } else {
        EventKind::EdgesRemoved
    };
    session.log_event(layer, kind, removed)
}

/// Gradient-guided layer-wise pruning under one of three schemes.
pub fn snohv1_run(
    graph: &Graph,
    config: &SnoHv1Config,
    model: &ModelConfig,
    opts: &TrainConfig,
) -> Result<RunOutput, RunError> {
    config.validate(model.depth, opts.epochs)?;
    let depth = model.depth;
    let mut s = Session::new(graph, model, opts)?;
    let num_edges = graph.pattern().num_edges();
    let mut accum = vec![0.0; num_edges];
    s.prune.next_layer_to_prune = Some(depth - 1);

    if config.scheme == Scheme::Reinit {
        for (phase, layer) in (0..depth).rev().enumerate() {
            s.begin_phase();
            for e in 0..config.reinit_epochs {
                let in_window = e + config.window >= config.reinit_epochs;
                let want = if in_window {
                    AdjacencyGrads::Layer(layer)
                } else {
                    AdjacencyGrads::None
                };
                let g = s.step(want)?;
                if in_window {
                    accumulate(&mut accum, g.adjacency[layer].as_ref());
                }
            }
            let removed = snohv1_prune_layer(&accum, &mut s.prune.masks, layer, config.prune_rate)?;
            log_removal(&mut s, layer, removed.len())?;
            accum.fill(0.0);
            s.prune.next_layer_to_prune = layer.checked_sub(1);
            s.reinit(crate::engine::splitmix64(model.seed ^ (phase as u64 + 1)))?;
            s.refresh()?;
        }
        s.begin_phase();
        for _ in 0..opts.epochs {
            s.step(AdjacencyGrads::None)?;
        }
        return s.finish();
    }

    let rounds = config.rounds();
    // (layer, removal count) per event, filled in lazily per layer
    let mut plan: Vec<usize> = Vec::new();
    let mut event = 0usize;
    let total_events = depth * rounds;
    for epoch in 1..=opts.epochs {
        let target = (event < total_events).then(|| depth - 1 - event / rounds);
        let want = target.map_or(AdjacencyGrads::None, AdjacencyGrads::Layer);
        let g = s.step(want)?;
        let Some(layer) = target else { continue };
        accumulate(&mut accum, g.adjacency[layer].as_ref());
        if epoch % config.window != 0 {
            continue;
        }
        let sub = event % rounds;
        if sub == 0 {
            let surviving = s.prune.masks.surviving_non_loop(layer);
            let total = (config.prune_rate / 100.0 * surviving as f64).floor() as usize;
            plan = split_count(total, rounds);
        }
        let removed = snohv1_remove(&accum, &mut s.prune.masks, layer, plan[sub])?;
        log_removal(&mut s, layer, removed.len())?;
        accum.fill(0.0);
        s.refresh()?;
        event += 1;
        s.prune.next_layer_to_prune = if event < total_events {
            Some(depth - 1 - event / rounds)
        } else {
            None
        };
    }
    s.finish()
}

/// Nodes to stop given per-layer distances (index 0 = first layer). Each
/// returned pair is `(node, depth)` with `depth` 1-based and at least 2.
pub fn snohv2_evaluate_stops(
    distances: &[NodeDistances],
    masks: &LayerMaskSet,
    config: &SnoHv2Config,
) -> Vec<(usize, usize)> {
    let Some(first) = distances.first() else {
        return Vec::new();
    };
    let mut stops = Vec::new();
    for node in 0..first.values.len() {
        if masks.stop_depth(node).is_some() {
            continue;
        }
        let limit = match config.threshold {
            Threshold::Absolute(rho) => rho,
            Threshold::Relative(p) => p / 100.0 * first.values[node],
        };
        if let Some(l) = (1..distances.len()).find(|&l| distances[l].values[node] < limit) {
            stops.push((node, l + 1));
        }
    }
    stops
}

/// Applies stops; returns how many took effect per depth (index = depth).
/// Stops of nodes already stopped at the same or a shallower depth are
/// ignored.
pub fn snohv2_prune(masks: &mut LayerMaskSet, stops: &[(usize, usize)]) -> Vec<usize> {
    let mut applied = vec![0; masks.depth() + 1];
    for &(node, depth) in stops {
        if masks.stop_node(node, depth) {
            applied[depth] += 1;
        } else {
            log::debug!("node {node} already stopped; stop at depth {depth} ignored");
        }
    }
    applied
}

pub(crate) fn snohv2_with_dropedge(
    graph: &Graph,
    config: Option<&SnoHv2Config>,
    dropedge: Option<DropEdgeConfig>,
    model: &ModelConfig,
    opts: &TrainConfig,
) -> Result<RunOutput, RunError> {
    if let Some(c) = config {
        c.validate()?;
    }
    if let Some(d) = &dropedge {
        d.validate()?;
    }
    let mut s = Session::new(graph, model, opts)?.with_dropedge(dropedge);
    for epoch in 1..=opts.epochs {
        s.step(AdjacencyGrads::None)?;
        let Some(cfg) = config else { continue };
        if !cfg.is_check_epoch(epoch) {
            continue;
        }
        let dists = s.probe()?.to_vec();
        let stops = snohv2_evaluate_stops(&dists, &s.prune.masks, cfg);
        let applied = snohv2_prune(&mut s.prune.masks, &stops);
        for (depth, &n) in applied.iter().enumerate().filter(|(_, &n)| n > 0) {
            s.log_event(depth - 1, EventKind::NodesStopped, n)?;
        }
        if !stops.is_empty() {
            s.refresh()?;
        }
    }
    s.finish()
}

/// Distance-guided per-node early stopping during training.
pub fn snohv2_run(
    graph: &Graph,
    config: &SnoHv2Config,
    model: &ModelConfig,
    opts: &TrainConfig,
) -> Result<RunOutput, RunError> {
    snohv2_with_dropedge(graph, Some(config), None, model, opts)
}

/// Stop-depth histogram of a finished run.
pub fn stop_depth_report(prune: &PruneState) -> crate::report::StopHistogram {
    prune.stop_depth_report()
}

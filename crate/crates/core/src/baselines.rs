//! Comparison pruners: random masks, DropEdge and an adjacency-only
//! lottery-ticket pruner (UGS-lite).

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::engine::{derived_rng, AdjacencyGrads, Adam, ModelConfig};
use crate::graph::{Graph, LayerMaskSet, NormalizedAdjacency};
use crate::report::EventKind;
use crate::snowflake::{snohv2_with_dropedge, SnoHv2Config};
use crate::train::{train_with_masks, RunError, RunOutput, Session, TrainConfig};

pub use crate::train::DropEdgeConfig;

const RANDOM_PRUNE_STREAM: u64 = 0x5A4D;

fn non_loop_survivors(masks: &LayerMaskSet, layer: usize) -> Vec<usize> {
    let p = masks.pattern();
    (0..p.num_edges())
        .filter(|&e| masks.layer(layer)[e] && !p.is_self_loop(e))
        .collect()
}

/// Clears a uniformly random `rate`% of the surviving non-self-loop entries
/// at each layer independently, then propagates zeros downwards.
pub fn random_prune(masks: &mut LayerMaskSet, rate: f64, seed: u64) -> Result<(), RunError> {
    if !(0.0..=100.0).contains(&rate) {
        return Err(RunError::Config("random prune rate must be in [0, 100]".into()));
    }
    for layer in 0..masks.depth() {
        let mut alive = non_loop_survivors(masks, layer);
        let count = (rate / 100.0 * alive.len() as f64).floor() as usize;
        let mut rng = derived_rng(seed ^ RANDOM_PRUNE_STREAM, layer as u64);
        alive.shuffle(&mut rng);
        for &e in &alive[..count] {
            masks.clear(layer, e);
        }
    }
    for layer in 0..masks.depth() {
        masks.propagate_zeros(layer)?;
    }
    Ok(())
}

/// Random nested masks whose per-layer edge sparsity (surviving fraction of
/// non-self-loop entries) matches `targets`. Targets above the previous
/// layer's are capped so the result stays depth-monotone.
pub fn random_prune_to_sparsity(masks: &mut LayerMaskSet, targets: &[f64], seed: u64) -> Result<(), RunError> {
    if targets.len() != masks.depth() {
        return Err(RunError::Config(format!(
            "{} sparsity targets for {} layers",
            targets.len(),
            masks.depth()
        )));
    }
    if targets.iter().any(|t| !(0.0..=1.0).contains(t)) {
        return Err(RunError::Config("sparsity targets must be in [0, 1]".into()));
    }
    let total = masks.pattern().num_non_loop_edges();
    let mut rng = derived_rng(seed ^ RANDOM_PRUNE_STREAM, u64::MAX);
    // one random order decides every layer, so survivors nest
    let mut order = non_loop_survivors(masks, 0);
    order.shuffle(&mut rng);
    for (layer, &t) in targets.iter().enumerate() {
        let keep = ((t * total as f64).round() as usize).min(order.len());
        for &e in &order[keep..] {
            masks.clear(layer, e);
        }
        masks.propagate_zeros(layer)?;
        order.retain(|&e| masks.layer(layer)[e]);
    }
    Ok(())
}

/// Drops each non-self-loop entry with probability `q`. The input is left
/// untouched.
pub fn dropedge_sample(adj: &NormalizedAdjacency, q: f64, epoch_seed: u64) -> NormalizedAdjacency {
    let cfg = DropEdgeConfig::new(q, epoch_seed);
    let keep = cfg.sample_keep(adj, 0, 0);
    adj.apply_mask(&keep).expect("keep bits cover the pattern")
}

/// Train on masks pruned once at random before training.
pub fn random_run(
    graph: &Graph,
    masks: LayerMaskSet,
    model: &ModelConfig,
    opts: &TrainConfig,
) -> Result<RunOutput, RunError> {
    train_with_masks(graph, model, opts, masks)
}

/// Plain training with per-epoch edge dropping.
pub fn dropedge_run(
    graph: &Graph,
    dropedge: DropEdgeConfig,
    model: &ModelConfig,
    opts: &TrainConfig,
) -> Result<RunOutput, RunError> {
    snohv2_with_dropedge(graph, None, Some(dropedge), model, opts)
}

/// DropEdge sampling composed with SnoHv2's persistent masks; probes see
/// the undropped masked adjacency.
pub fn dropedge_plus_snohv2(
    graph: &Graph,
    dropedge: DropEdgeConfig,
    snohv2: &SnoHv2Config,
    model: &ModelConfig,
    opts: &TrainConfig,
) -> Result<RunOutput, RunError> {
    snohv2_with_dropedge(graph, Some(snohv2), Some(dropedge), model, opts)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rewind {
    ToInit,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UgsLiteConfig {
    /// Percent of surviving entries removed per round.
    pub prune_rate: f64,
    pub rounds: usize,
    pub epochs_per_round: usize,
    pub rewind: Rewind,
    pub l1: f64,
}

impl Default for UgsLiteConfig {
    fn default() -> Self {
        Self {
            prune_rate: 20.0,
            rounds: 5,
            epochs_per_round: 200,
            rewind: Rewind::ToInit,
            l1: 1e-4,
        }
    }
}

impl UgsLiteConfig {
    pub fn validate(&self) -> Result<(), RunError> {
        if !(self.prune_rate >= 0.0 && self.prune_rate < 100.0) {
            return Err(RunError::Config("UGS prune rate must be in [0, 100)".into()));
        }
        if self.rounds == 0 {
            return Err(RunError::Config("UGS needs at least one round".into()));
        }
        if !(self.l1 >= 0.0) {
            return Err(RunError::Config("L1 coefficient must be non-negative".into()));
        }
        Ok(())
    }
}

/// One trainable real-valued mask shared by every layer. Each round trains,
/// removes the smallest-magnitude `prune_rate`% of surviving entries at all
/// layers at once and rewinds; a last phase of `epochs_per_round` retrains
/// on the final binary masks.
pub fn ugs_lite_run(
    graph: &Graph,
    config: &UgsLiteConfig,
    model: &ModelConfig,
    opts: &TrainConfig,
) -> Result<RunOutput, RunError> {
    config.validate()?;
    let mut s = Session::new(graph, model, opts)?;
    let pattern = graph.pattern().clone();
    let num_edges = pattern.num_edges();
    let depth = model.depth;

    for round in 0..config.rounds {
        let mut m = vec![1.0; num_edges];
        let mut opt = Adam::new(num_edges);
        s.edge_scale = Some(m.clone());
        s.refresh()?;
        s.begin_phase();
        for _ in 0..config.epochs_per_round {
            let g = s.step(AdjacencyGrads::All)?;
            let base = s.base().values();
            let mut dm = vec![0.0; num_edges];
            for (e, d) in dm.iter_mut().enumerate() {
                if pattern.is_self_loop(e) || !s.prune.masks.layer(0)[e] {
                    continue;
                }
                let from_loss: f64 = g.adjacency.iter().flatten().map(|ga| ga[e]).sum();
                *d = from_loss * base[e] + config.l1 * m[e].signum();
            }
            opt.step(&mut m, &dm, s.opts.lr);
            for e in 0..num_edges {
                if pattern.is_self_loop(e) || !s.prune.masks.layer(0)[e] {
                    m[e] = 1.0;
                }
            }
            s.edge_scale = Some(m.clone());
            s.refresh()?;
        }

        let mut alive: Vec<usize> = (0..num_edges)
            .filter(|&e| s.prune.masks.layer(0)[e] && !pattern.is_self_loop(e))
            .collect();
        let count = (config.prune_rate / 100.0 * alive.len() as f64).floor() as usize;
        alive.sort_by(|&a, &b| m[a].abs().total_cmp(&m[b].abs()).then(a.cmp(&b)));
        for &e in &alive[..count] {
            for layer in 0..depth {
                s.prune.masks.clear(layer, e);
            }
        }
        for layer in 0..depth {
            s.log_event(layer, EventKind::EdgesRemoved, count)?;
        }
        log::debug!("ugs round {} removed {count} entries", round + 1);
        if config.rewind == Rewind::ToInit {
            s.rewind();
        }
    }

    s.edge_scale = None;
    s.refresh()?;
    s.begin_phase();
    for _ in 0..config.epochs_per_round {
        s.step(AdjacencyGrads::None)?;
    }
    s.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{normalize, symmetrize};
    use ndarray::Array2;

    fn grid(n: usize) -> Graph {
        let mut raw = Vec::new();
        for r in 0..n {
            for c in 0..n {
                let i = r * n + c;
                if c + 1 < n {
                    raw.push((i, i + 1));
                }
                if r + 1 < n {
                    raw.push((i, i + n));
                }
            }
        }
        let (edges, _) = symmetrize(&raw);
        Graph::new(n * n, &edges, Array2::zeros((n * n, 1)), vec![0; n * n], 1).unwrap()
    }

    #[test]
    fn random_prune_extremes_and_determinism() {
        let g = grid(4);
        let mut m = LayerMaskSet::full(g.pattern().clone(), 3);
        random_prune(&mut m, 0.0, 1).unwrap();
        assert_eq!(m, LayerMaskSet::full(g.pattern().clone(), 3));
        random_prune(&mut m, 100.0, 1).unwrap();
        for l in 0..3 {
            assert_eq!(m.surviving_non_loop(l), 0);
        }
        m.check_invariants().unwrap();

        let mut a = LayerMaskSet::full(g.pattern().clone(), 3);
        let mut b = a.clone();
        random_prune(&mut a, 30.0, 7).unwrap();
        random_prune(&mut b, 30.0, 7).unwrap();
        assert_eq!(a, b);
        a.check_invariants().unwrap();
        assert!(a.surviving_non_loop(0) >= a.surviving_non_loop(2));
    }

    #[test]
    fn matched_sparsity_is_nested() {
        let g = grid(5);
        let mut m = LayerMaskSet::full(g.pattern().clone(), 4);
        random_prune_to_sparsity(&mut m, &[0.9, 0.5, 0.6, 0.25], 3).unwrap();
        m.check_invariants().unwrap();
        let total = g.pattern().num_non_loop_edges() as f64;
        let es: Vec<f64> = (0..4).map(|l| m.surviving_non_loop(l) as f64 / total).collect();
        assert!((es[0] - 0.9).abs() < 1.0 / total);
        assert!((es[1] - 0.5).abs() < 1.0 / total);
        assert_eq!(es[2], es[1]);
        assert!((es[3] - 0.25).abs() < 1.0 / total);
    }

    #[test]
    fn dropedge_extremes() {
        let g = grid(3);
        let a = normalize(&g);
        assert_eq!(dropedge_sample(&a, 0.0, 5), a);
        let d = dropedge_sample(&a, 1.0, 5);
        for e in 0..g.pattern().num_edges() {
            let expect = if g.pattern().is_self_loop(e) { a.values()[e] } else { 0.0 };
            assert_eq!(d.values()[e], expect);
        }
        assert_eq!(dropedge_sample(&a, 0.3, 9), dropedge_sample(&a, 0.3, 9));
    }
}

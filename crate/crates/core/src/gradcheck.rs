//! Analytic-vs-finite-difference gradient comparison on random small
//! instances.

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::baselines::random_prune;
use crate::engine::{
    backward, derived_rng, finite_diff_grad, forward, init_params, AdjacencyGrads, EngineError, ModelConfig,
    ModelState, PerturbTarget, Variant,
};
use crate::graph::{normalize, symmetrize, Graph, LayerMaskSet, NormalizedAdjacency, Splits};

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckConfig {
    pub trials: usize,
    pub max_nodes: usize,
    pub max_depth: usize,
    pub tolerance: f64,
    pub step: f64,
    pub seed: u64,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self {
            trials: 50,
            max_nodes: 12,
            max_depth: 4,
            tolerance: 1e-4,
            step: 1e-5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetKind {
    Weight,
    Adjacency,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradcheckRow {
    pub variant: Variant,
    pub target: TargetKind,
    pub checked: usize,
    /// Entries whose stencil crossed a relu kink.
    pub skipped: usize,
    pub max_rel_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradcheckReport {
    pub trials: usize,
    pub tolerance: f64,
    pub rows: Vec<GradcheckRow>,
}

impl GradcheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.rows.iter().map(|r| r.max_rel_err).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.max_rel_err < self.tolerance)
    }

    /// No comparison was made at all.
    pub fn vacuous(&self) -> bool {
        self.rows.iter().all(|r| r.checked == 0)
    }
}

/// `|a - n| / max(|a|, |n|, 1e-6)`. The floor keeps vanishing gradients
/// from turning rounding noise into large ratios.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// One random instance: graph, per-layer masked adjacency and weights.
pub struct Instance {
    pub graph: Graph,
    pub adj: Vec<NormalizedAdjacency>,
    pub masks: LayerMaskSet,
    pub state: ModelState,
}

pub fn random_instance(rng: &mut ChaCha8Rng, variant: Variant, max_nodes: usize, max_depth: usize) -> Instance {
    let n = rng.random_range(3..=max_nodes.max(3));
    let p = rng.random_range(0.2..0.6);
    let mut raw = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random::<f64>() < p {
                raw.push((i, j));
            }
        }
    }
    let (edges, _) = symmetrize(&raw);
    let f = rng.random_range(2..=5);
    let c = rng.random_range(2..=4);
    let x = Array2::from_shape_simple_fn((n, f), || {
        if rng.random::<f64>() < 0.3 {
            0.0
        } else {
            rng.random_range(-1.0..1.0)
        }
    });
    let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..c)).collect();
    let train: Vec<usize> = (0..n).filter(|_| rng.random::<f64>() < 0.6).collect();
    let train = if train.is_empty() { vec![0] } else { train };
    let rest: Vec<usize> = (0..n).filter(|i| !train.contains(i)).collect();
    let graph = Graph::new(n, &edges, x, labels, c)
        .and_then(|g| {
            g.with_splits(Splits {
                train,
                val: rest,
                test: Vec::new(),
            })
        })
        .expect("generated graph is valid");

    let depth = rng.random_range(1..=max_depth.max(1));
    let mut cfg = ModelConfig::new(variant, depth, f, c)
        .with_hidden(rng.random_range(2..=5))
        .with_seed(rng.random());
    cfg.batch_norm = rng.random::<f64>() < 0.3 && n >= 4;
    if rng.random::<f64>() < 0.2 {
        cfg.dropout = 0.25;
    }
    let mut state = init_params(&cfg).expect("valid config");
    // move away from the symmetric initial point
    for p in state.params_mut() {
        p.mapv_inplace(|w| w * 1.5);
    }

    let mut masks = LayerMaskSet::full(graph.pattern().clone(), depth);
    if rng.random::<f64>() < 0.5 {
        random_prune(&mut masks, rng.random_range(10.0..60.0), rng.random()).expect("valid rate");
    }
    let base = normalize(&graph);
    let adj = masks
        .layers()
        .iter()
        .map(|m| base.apply_mask(m).expect("mask length"))
        .collect();
    Instance {
        graph,
        adj,
        masks,
        state,
    }
}

/// Compares every weight entry and every active adjacency entry of
/// `trials` random instances, cycling through the three variants.
pub fn run_gradcheck(cfg: &GradcheckConfig) -> Result<GradcheckReport, EngineError> {
    let mut rows: Vec<GradcheckRow> = Variant::ALL
        .iter()
        .flat_map(|&variant| {
            [TargetKind::Weight, TargetKind::Adjacency].map(|target| GradcheckRow {
                variant,
                target,
                checked: 0,
                skipped: 0,
                max_rel_err: 0.0,
            })
        })
        .collect();
    let mut rng = derived_rng(cfg.seed, 0x6C);
    for trial in 0..cfg.trials {
        let variant = Variant::ALL[trial % 3];
        let inst = random_instance(&mut rng, variant, cfg.max_nodes, cfg.max_depth);
        let split = &inst.graph.splits().train;
        let tape = forward(&inst.graph, &inst.adj, &inst.state)?;
        let grads = backward(&tape, &inst.graph, &inst.adj, &inst.state, split, AdjacencyGrads::All)?;

        let mut targets = Vec::new();
        for (param, p) in inst.state.params().iter().enumerate() {
            for ((row, col), _) in p.indexed_iter() {
                targets.push((PerturbTarget::Weight { param, row, col }, grads.params[param][[row, col]]));
            }
        }
        for (layer, a) in inst.adj.iter().enumerate() {
            let g = grads.adjacency[layer].as_ref().expect("requested all layers");
            for edge in (0..a.values().len()).filter(|&e| a.values()[e] != 0.0) {
                targets.push((PerturbTarget::Adjacency { layer, edge }, g[edge]));
            }
        }
        for (target, analytic) in targets {
            let kind = match target {
                PerturbTarget::Weight { .. } => TargetKind::Weight,
                PerturbTarget::Adjacency { .. } => TargetKind::Adjacency,
            };
            let row = rows
                .iter_mut()
                .find(|r| r.variant == variant && r.target == kind)
                .expect("row per variant and kind");
            let fd = finite_diff_grad(&inst.graph, &inst.adj, &inst.state, split, target, cfg.step)?;
            if !fd.smooth {
                row.skipped += 1;
                continue;
            }
            row.checked += 1;
            row.max_rel_err = row.max_rel_err.max(relative_error(analytic, fd.estimate));
        }
    }
    Ok(GradcheckReport {
        trials: cfg.trials,
        tolerance: cfg.tolerance,
        rows,
    })
}

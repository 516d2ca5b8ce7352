use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use super::kernels;
use super::model::{derived_rng, ModelState, Variant};
use super::EngineError;
use crate::graph::{Graph, NormalizedAdjacency};

pub(crate) const BN_EPS: f64 = 1e-5;
const DROPOUT_STREAM: u64 = 0xD0_0D;

#[derive(Debug, Clone)]
pub(crate) struct BnCache {
    pub(crate) xhat: Array2<f64>,
    pub(crate) inv_std: Array1<f64>,
}

/// Activations cached by one forward pass.
///
/// For conv layer `l`: `Z = H·W` (pre-aggregation) and `T = Â·Z`
/// (post-aggregation). Hidden outputs are the `H` fed to the next layer.
#[derive(Debug, Clone)]
pub struct ForwardTape {
    pub(crate) step: u64,
    pub(crate) z: Vec<Array2<f64>>,
    pub(crate) t: Vec<Array2<f64>>,
    pub(crate) bn: Vec<Option<BnCache>>,
    // relu output, kept separately only where a residual is added on top
    pub(crate) act: Vec<Option<Array2<f64>>>,
    pub(crate) hidden: Vec<Array2<f64>>,
    pub(crate) drop: Vec<Option<Array2<f64>>>,
    pub(crate) logits: Array2<f64>,
    pub(crate) probs: Array2<f64>,
}

impl ForwardTape {
    pub fn depth(&self) -> usize {
        self.z.len()
    }

    /// `Z^(l) = H^(l) W^(l)`.
    pub fn pre_aggregation(&self, layer: usize) -> &Array2<f64> {
        &self.z[layer]
    }

    /// `T^(l) = Â^(l) Z^(l)`.
    pub fn post_aggregation(&self, layer: usize) -> &Array2<f64> {
        &self.t[layer]
    }

    /// Output of hidden layer `layer` (the input of layer `layer + 1`).
    pub fn hidden_output(&self, layer: usize) -> &Array2<f64> {
        &self.hidden[layer]
    }

    pub fn logits(&self) -> &Array2<f64> {
        &self.logits
    }

    /// Row-wise softmax of the logits.
    pub fn probabilities(&self) -> &Array2<f64> {
        &self.probs
    }

    pub fn predictions(&self) -> Vec<usize> {
        self.logits
            .rows()
            .into_iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |best, (k, &v)| {
                        if v > best.1 {
                            (k, v)
                        } else {
                            best
                        }
                    })
                    .0
            })
            .collect()
    }

    /// Step count of the state this tape was computed from.
    pub fn step(&self) -> u64 {
        self.step
    }

    pub(crate) fn relu_output(&self, layer: usize) -> &Array2<f64> {
        self.act[layer].as_ref().unwrap_or(&self.hidden[layer])
    }

    /// Which relu units are active, concatenated over hidden layers.
    pub fn activation_signature(&self) -> Vec<bool> {
        (0..self.hidden.len())
            .flat_map(|l| self.relu_output(l).iter().map(|&x| x > 0.0).collect::<Vec<_>>())
            .collect()
    }
}

fn check_inputs(graph: &Graph, adj: &[NormalizedAdjacency], state: &ModelState) -> Result<(), EngineError> {
    let cfg = state.config();
    if adj.len() != cfg.depth {
        return Err(EngineError::DimensionMismatch {
            what: "adjacency layers",
            expected: cfg.depth,
            got: adj.len(),
        });
    }
    if let Some(a) = adj.iter().find(|a| a.values().len() != graph.pattern().num_edges()) {
        return Err(EngineError::DimensionMismatch {
            what: "adjacency entries",
            expected: graph.pattern().num_edges(),
            got: a.values().len(),
        });
    }
    if graph.num_features() != cfg.input_dim {
        return Err(EngineError::DimensionMismatch {
            what: "input features",
            expected: cfg.input_dim,
            got: graph.num_features(),
        });
    }
    if graph.num_classes() != cfg.num_classes {
        return Err(EngineError::DimensionMismatch {
            what: "classes",
            expected: cfg.num_classes,
            got: graph.num_classes(),
        });
    }
    Ok(())
}

pub(crate) fn input_product(graph: &Graph, w: ArrayView2<'_, f64>) -> Array2<f64> {
    if graph.feature_density() < 0.5 {
        kernels::sparse_rows_matmul(graph.sparse_features(), w)
    } else {
        graph.features().dot(&w)
    }
}

fn relu(x: &Array2<f64>) -> Array2<f64> {
    x.mapv(|v| if v > 0.0 { v } else { 0.0 })
}

pub(crate) fn batch_norm(t: &Array2<f64>, gamma: &Array2<f64>, beta: &Array2<f64>) -> (Array2<f64>, BnCache) {
    let n = t.nrows() as f64;
    let mean = t.sum_axis(Axis(0)) / n;
    let centered = t - &mean;
    let var = centered.mapv(|v| v * v).sum_axis(Axis(0)) / n;
    let inv_std = var.mapv(|v| 1.0 / (v + BN_EPS).sqrt());
    let xhat = &centered * &inv_std;
    let out = &xhat * &gamma.row(0) + &beta.row(0);
    (out, BnCache { xhat, inv_std })
}

pub(crate) fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut p = logits.clone();
    for mut row in p.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
    p
}

fn ensure_finite(m: &Array2<f64>, layer: usize) -> Result<(), EngineError> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(EngineError::NonFinite { layer })
    }
}

struct Resume<'a> {
    tape: &'a ForwardTape,
    layer: usize,
    input: Array2<f64>,
}

fn run(
    graph: &Graph,
    adj: &[NormalizedAdjacency],
    state: &ModelState,
    training: bool,
    parallel: bool,
    resume: Option<Resume<'_>>,
) -> Result<ForwardTape, EngineError> {
    check_inputs(graph, adj, state)?;
    let cfg = state.config();
    let depth = cfg.depth;
    let use_dropout = training && cfg.dropout > 0.0;
    let mut rng = derived_rng(cfg.seed, DROPOUT_STREAM ^ (state.step_count << 8));

    let mut tape = ForwardTape {
        step: state.step_count,
        z: Vec::with_capacity(depth),
        t: Vec::with_capacity(depth),
        bn: Vec::with_capacity(depth),
        act: Vec::with_capacity(depth),
        hidden: Vec::with_capacity(depth),
        drop: Vec::with_capacity(depth),
        logits: Array2::zeros((0, 0)),
        probs: Array2::zeros((0, 0)),
    };

    let start = match resume {
        Some(Resume { tape: prev, layer, input }) => {
            if layer == 0 || layer > prev.hidden.len() {
                return Err(EngineError::InvalidConfig(format!(
                    "cannot resume at layer {layer}"
                )));
            }
            if input.dim() != prev.hidden[layer - 1].dim() {
                return Err(EngineError::DimensionMismatch {
                    what: "resumed input rows",
                    expected: prev.hidden[layer - 1].nrows(),
                    got: input.nrows(),
                });
            }
            tape.z.extend_from_slice(&prev.z[..layer]);
            tape.t.extend_from_slice(&prev.t[..layer]);
            tape.bn.extend_from_slice(&prev.bn[..layer]);
            tape.act.extend_from_slice(&prev.act[..layer]);
            tape.drop.extend_from_slice(&prev.drop[..layer]);
            tape.hidden.extend_from_slice(&prev.hidden[..layer - 1]);
            tape.hidden.push(input);
            layer
        }
        None => 0,
    };

    for layer in start..depth {
        let w = state.conv_weight(layer);
        let (z, mask) = if layer == 0 {
            (input_product(graph, w.view()), None)
        } else {
            let h = &tape.hidden[layer - 1];
            if use_dropout {
                let keep = 1.0 - cfg.dropout;
                let mask = Array2::from_shape_simple_fn(h.raw_dim(), || {
                    if rng.random::<f64>() < keep {
                        1.0 / keep
                    } else {
                        0.0
                    }
                });
                ((h * &mask).dot(w), Some(mask))
            } else {
                (h.dot(w), None)
            }
        };
        let t = kernels::spmm(graph.pattern(), adj[layer].values(), z.view(), parallel);
        ensure_finite(&t, layer)?;

        if cfg.is_hidden(layer) {
            let (u, cache) = if cfg.batch_norm {
                let gamma = &state.params[cfg.bn_gamma_index(layer)];
                let beta = &state.params[cfg.bn_beta_index(layer)];
                let (u, cache) = batch_norm(&t, gamma, beta);
                (Some(u), Some(cache))
            } else {
                (None, None)
            };
            let a = relu(u.as_ref().unwrap_or(&t));
            if cfg.variant == Variant::ResGcn && layer > 0 {
                let h = &tape.hidden[layer - 1] + &a;
                tape.hidden.push(h);
                tape.act.push(Some(a));
            } else {
                tape.hidden.push(a);
                tape.act.push(None);
            }
            tape.bn.push(cache);
        } else {
            tape.bn.push(None);
            tape.act.push(None);
        }
        tape.drop.push(mask);
        tape.z.push(z);
        tape.t.push(t);
    }

    tape.logits = match cfg.variant {
        Variant::Gcn => tape.t[depth - 1].clone(),
        Variant::ResGcn => tape.hidden[depth - 1].dot(&state.params[cfg.head_index()]),
        Variant::JkNet => {
            let head = &state.params[cfg.head_index()];
            let h = cfg.hidden_dim;
            let mut logits = Array2::zeros((graph.num_nodes(), cfg.num_classes));
            for (l, out) in tape.hidden.iter().enumerate() {
                logits += &out.dot(&head.slice(s![l * h..(l + 1) * h, ..]));
            }
            logits
        }
    };
    ensure_finite(&tape.logits, depth - 1)?;
    tape.probs = softmax_rows(&tape.logits);
    Ok(tape)
}

/// Training-mode forward pass (dropout active when configured).
pub fn forward(graph: &Graph, adj: &[NormalizedAdjacency], state: &ModelState) -> Result<ForwardTape, EngineError> {
    run(graph, adj, state, true, false, None)
}

/// Forward pass with dropout disabled.
pub fn forward_eval(
    graph: &Graph,
    adj: &[NormalizedAdjacency],
    state: &ModelState,
) -> Result<ForwardTape, EngineError> {
    run(graph, adj, state, false, false, None)
}

/// Like [`forward`] but lets the sparse kernels split rows across threads.
/// Row results do not depend on the split, so the output is identical.
pub fn forward_parallel(
    graph: &Graph,
    adj: &[NormalizedAdjacency],
    state: &ModelState,
    training: bool,
) -> Result<ForwardTape, EngineError> {
    run(graph, adj, state, training, true, None)
}

/// Re-runs layers `layer..` of an existing tape with the input of `layer`
/// replaced by `input` (dropout off). Layers before `layer` are copied.
pub fn forward_resumed(
    graph: &Graph,
    adj: &[NormalizedAdjacency],
    state: &ModelState,
    tape: &ForwardTape,
    layer: usize,
    input: Array2<f64>,
) -> Result<ForwardTape, EngineError> {
    run(
        graph,
        adj,
        state,
        false,
        false,
        Some(Resume { tape, layer, input }),
    )
}

/// Mean cross-entropy and argmax accuracy over `split`.
pub fn loss_and_accuracy(tape: &ForwardTape, graph: &Graph, split: &[usize]) -> Result<(f64, f64), EngineError> {
    if split.is_empty() {
        return Err(EngineError::EmptySplit);
    }
    let labels = graph.labels();
    let preds = tape.predictions();
    let mut loss = 0.0;
    let mut correct = 0usize;
    for &i in split {
        let row = tape.logits.row(i);
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
        loss += lse - row[labels[i]];
        correct += usize::from(preds[i] == labels[i]);
    }
    let n = split.len() as f64;
    Ok((loss / n, correct as f64 / n))
}

/// Argmax accuracy only.
pub fn accuracy(tape: &ForwardTape, graph: &Graph, split: &[usize]) -> Option<f64> {
    if split.is_empty() {
        return None;
    }
    let preds = tape.predictions();
    let labels = graph.labels();
    let correct = split.iter().filter(|&&i| preds[i] == labels[i]).count();
    Some(correct as f64 / split.len() as f64)
}

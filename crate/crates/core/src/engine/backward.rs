use ndarray::{s, Array2, Axis};

use super::forward::ForwardTape;
use super::kernels;
use super::model::{ModelState, Variant};
use super::EngineError;
use crate::graph::{Graph, NormalizedAdjacency};

/// Which layers get `∂L/∂Â` computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdjacencyGrads {
    None,
    Layer(usize),
    All,
}

impl AdjacencyGrads {
    fn wants(self, layer: usize) -> bool {
        match self {
            AdjacencyGrads::None => false,
            AdjacencyGrads::Layer(l) => l == layer,
            AdjacencyGrads::All => true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Gradients {
    /// Same layout as [`ModelState::params`].
    pub params: Vec<Array2<f64>>,
    /// Per layer, one value per stored edge; zero on masked entries. `None`
    /// for layers that were not requested.
    pub adjacency: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn zeros_like(state: &ModelState) -> Self {
        Self {
            params: state
                .params()
                .iter()
                .map(|p| Array2::zeros(p.raw_dim()))
                .collect(),
            adjacency: vec![None; state.config().depth],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.iter().all(|v| v.is_finite()))
            && self
                .adjacency
                .iter()
                .flatten()
                .all(|g| g.iter().all(|v| v.is_finite()))
    }
}

/// Gradient of `dL/dU` through batch norm back to its input, plus the
/// affine parameter gradients.
fn batch_norm_backward(
    du: &Array2<f64>,
    xhat: &Array2<f64>,
    inv_std: &ndarray::Array1<f64>,
    gamma: &Array2<f64>,
) -> (Array2<f64>, Array2<f64>, Array2<f64>) {
    let n = du.nrows() as f64;
    let dgamma = (du * xhat).sum_axis(Axis(0)).insert_axis(Axis(0));
    let dbeta = du.sum_axis(Axis(0)).insert_axis(Axis(0));
    let dxhat = du * &gamma.row(0);
    let sum_dxhat = dxhat.sum_axis(Axis(0));
    let sum_dxhat_xhat = (&dxhat * xhat).sum_axis(Axis(0));
    let dt = (&(&(&dxhat * n) - &sum_dxhat) - &(xhat * &sum_dxhat_xhat)) * &(inv_std / n);
    (dt, dgamma, dbeta)
}

/// Reverse-mode gradients of the mean cross-entropy over `split` with
/// respect to every weight tensor and (optionally) every active adjacency
/// entry.
pub fn backward(
    tape: &ForwardTape,
    graph: &Graph,
    adj: &[NormalizedAdjacency],
    state: &ModelState,
    split: &[usize],
    adj_grads: AdjacencyGrads,
) -> Result<Gradients, EngineError> {
    backward_impl(tape, graph, adj, state, split, adj_grads, false)
}

pub(crate) fn backward_impl(
    tape: &ForwardTape,
    graph: &Graph,
    adj: &[NormalizedAdjacency],
    state: &ModelState,
    split: &[usize],
    adj_grads: AdjacencyGrads,
    parallel: bool,
) -> Result<Gradients, EngineError> {
    if tape.step != state.step_count {
        return Err(EngineError::StaleTape {
            tape_step: tape.step,
            state_step: state.step_count,
        });
    }
    if split.is_empty() {
        return Err(EngineError::EmptySplit);
    }
    let cfg = state.config();
    let depth = cfg.depth;
    if tape.depth() != depth || adj.len() != depth {
        return Err(EngineError::DimensionMismatch {
            what: "tape layers",
            expected: depth,
            got: tape.depth(),
        });
    }
    let pattern = graph.pattern();
    let labels = graph.labels();
    let mut grads = Gradients::zeros_like(state);

    let scale = 1.0 / split.len() as f64;
    let mut dlogits = Array2::<f64>::zeros(tape.logits.raw_dim());
    for &i in split {
        let mut row = dlogits.row_mut(i);
        row.assign(&tape.probs.row(i));
        row[labels[i]] -= 1.0;
        row *= scale;
    }

    // gradient w.r.t. the output of the layer currently being processed
    let mut dh: Option<Array2<f64>> = None;
    let mut jk_blocks: Vec<Array2<f64>> = Vec::new();
    match cfg.variant {
        Variant::Gcn => {}
        Variant::ResGcn => {
            let head = &state.params[cfg.head_index()];
            grads.params[cfg.head_index()] = tape.hidden[depth - 1].t().dot(&dlogits);
            dh = Some(dlogits.dot(&head.t()));
        }
        Variant::JkNet => {
            let head = &state.params[cfg.head_index()];
            let h = cfg.hidden_dim;
            let dhead = &mut grads.params[cfg.head_index()];
            for (l, out) in tape.hidden.iter().enumerate() {
                let block = head.slice(s![l * h..(l + 1) * h, ..]);
                dhead
                    .slice_mut(s![l * h..(l + 1) * h, ..])
                    .assign(&out.t().dot(&dlogits));
                jk_blocks.push(dlogits.dot(&block.t()));
            }
        }
    }

    let mut dlogits = Some(dlogits);
    for layer in (0..depth).rev() {
        let mut residual: Option<Array2<f64>> = None;
        let dt = if cfg.is_hidden(layer) {
            let mut d_out = match dh.take() {
                Some(d) => d,
                None => Array2::zeros(tape.hidden[layer].raw_dim()),
            };
            if cfg.variant == Variant::JkNet {
                d_out += &jk_blocks[layer];
            }
            if cfg.variant == Variant::ResGcn && layer > 0 {
                residual = Some(d_out.clone());
            }
            let act = tape.relu_output(layer);
            let du = ndarray::Zip::from(&d_out)
                .and(act)
                .map_collect(|&g, &a| if a > 0.0 { g } else { 0.0 });
            match &tape.bn[layer] {
                Some(cache) => {
                    let gi = cfg.bn_gamma_index(layer);
                    let (dt, dgamma, dbeta) =
                        batch_norm_backward(&du, &cache.xhat, &cache.inv_std, &state.params[gi]);
                    grads.params[gi] = dgamma;
                    grads.params[cfg.bn_beta_index(layer)] = dbeta;
                    dt
                }
                None => du,
            }
        } else {
            dlogits.take().expect("only the last GCN layer emits logits")
        };

        let values = adj[layer].values();
        if adj_grads.wants(layer) {
            grads.adjacency[layer] = Some(kernels::adjacency_grad(
                pattern,
                values,
                dt.view(),
                tape.z[layer].view(),
            ));
        }
        let dz = kernels::spmm_transposed(pattern, values, dt.view(), parallel);
        if layer == 0 {
            grads.params[0] = if graph.feature_density() < 0.5 {
                kernels::sparse_rows_t_matmul(graph.sparse_features(), cfg.input_dim, dz.view())
            } else {
                graph.features().t().dot(&dz)
            };
        } else {
            let input = &tape.hidden[layer - 1];
            let w = state.conv_weight(layer);
            let mut dx = dz.dot(&w.t());
            grads.params[layer] = match &tape.drop[layer] {
                Some(mask) => {
                    dx *= mask;
                    (input * mask).t().dot(&dz)
                }
                None => input.t().dot(&dz),
            };
            if let Some(r) = residual {
                dx += &r;
            }
            dh = Some(dx);
        }
    }
    Ok(grads)
}

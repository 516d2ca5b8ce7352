use super::forward::{forward, loss_and_accuracy};
use super::model::ModelState;
use super::EngineError;
use crate::graph::{Graph, NormalizedAdjacency};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PerturbTarget {
    Weight { param: usize, row: usize, col: usize },
    Adjacency { layer: usize, edge: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiniteDiff {
    pub estimate: f64,
    /// False when some relu unit flipped between `x - h` and `x + h`, so the
    /// loss is not differentiable over the stencil.
    pub smooth: bool,
}

/// Central difference `(L(x+h) - L(x-h)) / 2h` of the mean training loss
/// over `split`.
pub fn finite_diff_grad(
    graph: &Graph,
    adj: &[NormalizedAdjacency],
    state: &ModelState,
    split: &[usize],
    target: PerturbTarget,
    step: f64,
) -> Result<FiniteDiff, EngineError> {
    let base = forward(graph, adj, state)?.activation_signature();
    let eval = |delta: f64| -> Result<(f64, Vec<bool>), EngineError> {
        let tape = match target {
            PerturbTarget::Weight { param, row, col } => {
                let mut s = state.clone();
                let p = s
                    .params_mut()
                    .get_mut(param)
                    .ok_or_else(|| EngineError::TargetOutOfRange(format!("param {param}")))?;
                let x = p
                    .get_mut((row, col))
                    .ok_or_else(|| EngineError::TargetOutOfRange(format!("param {param} ({row}, {col})")))?;
                *x += delta;
                forward(graph, adj, &s)?
            }
            PerturbTarget::Adjacency { layer, edge } => {
                let a = adj
                    .get(layer)
                    .ok_or_else(|| EngineError::TargetOutOfRange(format!("layer {layer}")))?;
                let v = *a
                    .values()
                    .get(edge)
                    .ok_or_else(|| EngineError::TargetOutOfRange(format!("edge {edge}")))?;
                if v == 0.0 {
                    return Err(EngineError::MaskedTarget { layer, edge });
                }
                let mut perturbed = adj.to_vec();
                perturbed[layer].values_mut()[edge] = v + delta;
                forward(graph, &perturbed, state)?
            }
        };
        Ok((loss_and_accuracy(&tape, graph, split)?.0, tape.activation_signature()))
    };
    let (plus, sig_plus) = eval(step)?;
    let (minus, sig_minus) = eval(-step)?;
    Ok(FiniteDiff {
        estimate: (plus - minus) / (2.0 * step),
        smooth: sig_plus == base && sig_minus == base,
    })
}

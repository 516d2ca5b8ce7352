use ndarray::ArrayView2;

use super::forward::ForwardTape;

/// Per-node cosine distance `1 - cos(Z_i, T_i)` at one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeDistances {
    pub values: Vec<f64>,
    /// Rows where either side had zero norm (reported as 1.0).
    pub zero_norm: usize,
}

impl NodeDistances {
    pub fn mean(&self) -> f64 {
        if self.values.is_empty() {
            return 0.0;
        }
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

pub fn cosine_distance_rows(z: ArrayView2<'_, f64>, t: ArrayView2<'_, f64>) -> NodeDistances {
    assert_eq!(z.dim(), t.dim());
    let mut zero_norm = 0;
    let values = z
        .rows()
        .into_iter()
        .zip(t.rows())
        .map(|(a, b)| {
            let (aa, bb) = (a.dot(&a), b.dot(&b));
            if aa == 0.0 || bb == 0.0 {
                zero_norm += 1;
                return 1.0;
            }
            (1.0 - a.dot(&b) / (aa * bb).sqrt()).clamp(0.0, 2.0)
        })
        .collect();
    NodeDistances { values, zero_norm }
}

/// Distance between pre- and post-aggregation rows of conv layer `layer`
/// (0-based).
pub fn cosine_distance_per_node(tape: &ForwardTape, layer: usize) -> NodeDistances {
    cosine_distance_rows(tape.z[layer].view(), tape.t[layer].view())
}

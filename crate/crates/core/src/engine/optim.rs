use ndarray::Zip;

use super::backward::Gradients;
use super::model::ModelState;
use super::EngineError;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

fn update(x: &mut f64, m: &mut f64, v: &mut f64, g: f64, lr: f64, c1: f64, c2: f64) {
    *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
    *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
    *x -= lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
}

impl ModelState {
    /// One bias-corrected Adam update. Adjacency gradients are ignored.
    pub fn adam_step(&mut self, grads: &Gradients, lr: f64) -> Result<(), EngineError> {
        if grads.params.len() != self.params.len() {
            return Err(EngineError::DimensionMismatch {
                what: "gradient tensors",
                expected: self.params.len(),
                got: grads.params.len(),
            });
        }
        for (k, (g, p)) in grads.params.iter().zip(&self.params).enumerate() {
            if g.dim() != p.dim() {
                return Err(EngineError::DimensionMismatch {
                    what: "gradient rows",
                    expected: p.nrows(),
                    got: g.nrows(),
                });
            }
            if !g.iter().all(|v| v.is_finite()) {
                return Err(EngineError::NonFiniteGradient {
                    param: self.config().param_name(k),
                });
            }
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let (c1, c2) = (1.0 - ADAM_BETA1.powi(t), 1.0 - ADAM_BETA2.powi(t));
        for k in 0..self.params.len() {
            Zip::from(&mut self.params[k])
                .and(&mut self.first_moment[k])
                .and(&mut self.second_moment[k])
                .and(&grads.params[k])
                .for_each(|x, m, v, &g| update(x, m, v, g, lr, c1, c2));
        }
        Ok(())
    }
}

/// Adam over a flat parameter vector (used for trainable edge masks).
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    pub fn step(&mut self, x: &mut [f64], g: &[f64], lr: f64) {
        assert_eq!(x.len(), self.m.len());
        assert_eq!(g.len(), self.m.len());
        self.t += 1;
        let (c1, c2) = (1.0 - ADAM_BETA1.powi(self.t), 1.0 - ADAM_BETA2.powi(self.t));
        for i in 0..x.len() {
            update(&mut x[i], &mut self.m[i], &mut self.v[i], g[i], lr, c1, c2);
        }
    }

    /// Zeroes the moments of entry `i`, e.g. after it is pruned.
    pub fn reset_entry(&mut self, i: usize) {
        self.m[i] = 0.0;
        self.v[i] = 0.0;
    }
}

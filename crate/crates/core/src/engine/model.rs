use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::EngineError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Plain stacked graph convolutions; the last one emits class scores.
    Gcn,
    /// Residual hidden layers `H + relu(ÂHW)` and a linear head.
    ResGcn,
    /// Every hidden output concatenated into a linear head.
    JkNet,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Gcn, Variant::ResGcn, Variant::JkNet];
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Gcn => "gcn",
            Variant::ResGcn => "resgcn",
            Variant::JkNet => "jknet",
        })
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "gcn" => Ok(Variant::Gcn),
            "resgcn" | "res" => Ok(Variant::ResGcn),
            "jknet" | "jk" => Ok(Variant::JkNet),
            other => Err(format!("unknown variant '{other}' (gcn, resgcn, jknet)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub variant: Variant,
    /// Number of graph-convolution layers.
    pub depth: usize,
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub num_classes: usize,
    pub activation: Activation,
    pub seed: u64,
    /// Dropout on the inputs of conv layers `1..depth`. Off by default.
    pub dropout: f64,
    /// Batch normalization (full-batch statistics) before each activation.
    pub batch_norm: bool,
}

impl ModelConfig {
    pub fn new(variant: Variant, depth: usize, input_dim: usize, num_classes: usize) -> Self {
        Self {
            variant,
            depth,
            input_dim,
            hidden_dim: 64,
            num_classes,
            activation: Activation::Relu,
            seed: 0,
            dropout: 0.0,
            batch_norm: false,
        }
    }

    pub fn with_hidden(mut self, hidden_dim: usize) -> Self {
        self.hidden_dim = hidden_dim;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |msg: &str| Err(EngineError::InvalidConfig(msg.to_string()));
        if self.depth == 0 {
            return bad("depth must be at least 1");
        }
        if self.input_dim == 0 || self.hidden_dim == 0 || self.num_classes == 0 {
            return bad("dimensions must be at least 1");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must be in [0, 1)");
        }
        Ok(())
    }

    /// Whether conv layer `layer` feeds an activation (as opposed to emitting
    /// class scores directly).
    pub fn is_hidden(&self, layer: usize) -> bool {
        match self.variant {
            Variant::Gcn => layer + 1 < self.depth,
            Variant::ResGcn | Variant::JkNet => true,
        }
    }

    pub fn num_hidden_layers(&self) -> usize {
        (0..self.depth).filter(|&l| self.is_hidden(l)).count()
    }

    pub fn has_head(&self) -> bool {
        !matches!(self.variant, Variant::Gcn)
    }

    /// `(fan_in, fan_out)` of conv layer `layer`.
    pub fn conv_shape(&self, layer: usize) -> (usize, usize) {
        let fan_in = if layer == 0 {
            self.input_dim
        } else {
            self.hidden_dim
        };
        let fan_out = if self.is_hidden(layer) {
            self.hidden_dim
        } else {
            self.num_classes
        };
        (fan_in, fan_out)
    }

    pub fn head_shape(&self) -> Option<(usize, usize)> {
        match self.variant {
            Variant::Gcn => None,
            Variant::ResGcn => Some((self.hidden_dim, self.num_classes)),
            Variant::JkNet => Some((self.depth * self.hidden_dim, self.num_classes)),
        }
    }

    pub(crate) fn head_index(&self) -> usize {
        self.depth
    }

    pub(crate) fn bn_base(&self) -> usize {
        self.depth + usize::from(self.has_head())
    }

    pub(crate) fn bn_gamma_index(&self, layer: usize) -> usize {
        self.bn_base() + 2 * layer
    }

    pub(crate) fn bn_beta_index(&self, layer: usize) -> usize {
        self.bn_base() + 2 * layer + 1
    }

    pub fn num_params(&self) -> usize {
        self.bn_base()
            + if self.batch_norm {
                2 * self.num_hidden_layers()
            } else {
                0
            }
    }

    /// Human-readable name of parameter tensor `index`.
    pub fn param_name(&self, index: usize) -> String {
        if index < self.depth {
            format!("conv{index}")
        } else if self.has_head() && index == self.head_index() {
            "head".to_string()
        } else {
            let k = index - self.bn_base();
            let kind = if k % 2 == 0 { "gamma" } else { "beta" };
            format!("bn{}.{kind}", k / 2)
        }
    }
}

/// Weights plus Adam moment buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    config: ModelConfig,
    pub(crate) params: Vec<Array2<f64>>,
    pub(crate) first_moment: Vec<Array2<f64>>,
    pub(crate) second_moment: Vec<Array2<f64>>,
    pub(crate) step_count: u64,
}

impl ModelState {
    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &[Array2<f64>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Array2<f64>] {
        &mut self.params
    }

    pub fn conv_weight(&self, layer: usize) -> &Array2<f64> {
        &self.params[layer]
    }

    pub fn head_weight(&self) -> Option<&Array2<f64>> {
        self.config
            .has_head()
            .then(|| &self.params[self.config.head_index()])
    }

    pub fn first_moment(&self) -> &[Array2<f64>] {
        &self.first_moment
    }

    pub fn second_moment(&self) -> &[Array2<f64>] {
        &self.second_moment
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// Replaces the weights (e.g. rewinding to an earlier snapshot) and
    /// clears the optimizer state.
    pub fn reset_to(&mut self, params: &[Array2<f64>]) {
        self.params = params.to_vec();
        for m in self.first_moment.iter_mut().chain(&mut self.second_moment) {
            m.fill(0.0);
        }
        self.step_count = 0;
    }
}

pub(crate) fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Independent RNG stream derived from a base seed and a tag.
pub fn derived_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(stream)))
}

fn glorot(rng: &mut impl Rng, fan_in: usize, fan_out: usize) -> Array2<f64> {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Array2::from_shape_simple_fn((fan_in, fan_out), || rng.random_range(-bound..bound))
}

/// Glorot-uniform weights, unit/zero batch-norm affine terms and zeroed
/// optimizer state. Deterministic in `config.seed`.
pub fn init_params(config: &ModelConfig) -> Result<ModelState, EngineError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = Vec::with_capacity(config.num_params());
    for layer in 0..config.depth {
        let (fan_in, fan_out) = config.conv_shape(layer);
        params.push(glorot(&mut rng, fan_in, fan_out));
    }
    if let Some((fan_in, fan_out)) = config.head_shape() {
        params.push(glorot(&mut rng, fan_in, fan_out));
    }
    if config.batch_norm {
        for _ in 0..config.num_hidden_layers() {
            params.push(Array2::ones((1, config.hidden_dim)));
            params.push(Array2::zeros((1, config.hidden_dim)));
        }
    }
    let zeros: Vec<Array2<f64>> = params.iter().map(|p| Array2::zeros(p.raw_dim())).collect();
    Ok(ModelState {
        config: config.clone(),
        params,
        first_moment: zeros.clone(),
        second_moment: zeros,
        step_count: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_state() {
        let cfg = ModelConfig::new(Variant::JkNet, 3, 10, 4).with_seed(9);
        assert_eq!(init_params(&cfg).unwrap(), init_params(&cfg).unwrap());
        let other = init_params(&cfg.clone().with_seed(10)).unwrap();
        assert_ne!(init_params(&cfg).unwrap(), other);
    }

    #[test]
    fn shapes_follow_variant() {
        let s = init_params(&ModelConfig::new(Variant::Gcn, 2, 1433, 7)).unwrap();
        assert_eq!(s.conv_weight(0).dim(), (1433, 64));
        assert_eq!(s.conv_weight(1).dim(), (64, 7));
        assert!(s.head_weight().is_none());

        let s = init_params(&ModelConfig::new(Variant::ResGcn, 3, 20, 5)).unwrap();
        assert_eq!(s.conv_weight(2).dim(), (64, 64));
        assert_eq!(s.head_weight().unwrap().dim(), (64, 5));

        let mut cfg = ModelConfig::new(Variant::JkNet, 4, 20, 5).with_hidden(8);
        cfg.batch_norm = true;
        let s = init_params(&cfg).unwrap();
        assert_eq!(s.head_weight().unwrap().dim(), (32, 5));
        assert_eq!(s.params().len(), 4 + 1 + 8);
        assert_eq!(cfg.param_name(5), "bn0.gamma");
        assert_eq!(cfg.param_name(12), "bn3.beta");
    }

    #[test]
    fn glorot_bound_and_zero_moments() {
        let cfg = ModelConfig::new(Variant::Gcn, 3, 30, 6).with_hidden(16);
        let s = init_params(&cfg).unwrap();
        for layer in 0..3 {
            let (a, b) = cfg.conv_shape(layer);
            let bound = (6.0 / (a + b) as f64).sqrt();
            assert!(s.conv_weight(layer).iter().all(|w| w.abs() <= bound));
        }
        assert!(s.first_moment().iter().all(|m| m.iter().all(|&x| x == 0.0)));
        assert_eq!(s.step_count(), 0);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(init_params(&ModelConfig::new(Variant::Gcn, 0, 3, 2)).is_err());
        assert!(init_params(&ModelConfig::new(Variant::Gcn, 1, 0, 2)).is_err());
        let mut cfg = ModelConfig::new(Variant::Gcn, 1, 3, 2);
        cfg.dropout = 1.0;
        assert!(init_params(&cfg).is_err());
    }
}

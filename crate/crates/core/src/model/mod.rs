//! Node embeddings, the edge-weighted attention layer, and the short-term /
//! long-term rating heads.

pub mod checkpoint;
pub mod forward;
pub mod predict;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::HeteroGraph;

pub use forward::{aggregate_node, attention_coefficients, DropoutMode, Forward};
pub use predict::{fuse, predict_long, predict_short, Prediction, Predictor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub embed_dim: usize,
    /// Width of the projected edge feature.
    pub edge_dim: usize,
    pub leaky_slope: f64,
    pub dropout_rate: f64,
    pub heads: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            embed_dim: 64,
            edge_dim: 8,
            leaky_slope: 0.2,
            dropout_rate: 0.6,
            heads: 1,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.embed_dim == 0 || self.edge_dim == 0 {
            return Err(Error::Invalid("embed_dim and edge_dim must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Invalid(format!(
                "dropout rate must be in [0, 1), got {}",
                self.dropout_rate
            )));
        }
        if self.heads != 1 {
            return Err(Error::Invalid("only a single attention head is supported".into()));
        }
        if !self.leaky_slope.is_finite() {
            return Err(Error::Invalid("leaky_slope must be finite".into()));
        }
        Ok(())
    }

    /// Width of the projected node representation.
    pub fn hidden_dim(&self) -> usize {
        self.embed_dim
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            rows: 1,
            cols: 1,
            data: vec![value],
        }
    }

    fn uniform(rows: usize, cols: usize, bound: f64, rng: &mut impl Rng) -> Self {
        let data = (0..rows * cols).map(|_| rng.gen_range(-bound..=bound)).collect();
        Self { rows, cols, data }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn value(&self) -> f64 {
        self.data[0]
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }
}

pub const PARAM_NAMES: [&str; 10] = [
    "embeddings",
    "proj",
    "attn",
    "edge_proj",
    "long_head",
    "long_bias",
    "short_head",
    "short_bias",
    "alpha",
    "beta",
];

/// Every trainable tensor. `attn` is laid out as
/// `[center part (d') | neighbour part (d') | edge part (d_e)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    /// One row per graph node.
    pub embeddings: Tensor,
    /// Shared projection, `d' x d`.
    pub proj: Tensor,
    pub attn: Tensor,
    /// Scalar edge weight to edge feature, `d_e x 1`.
    pub edge_proj: Tensor,
    pub long_head: Tensor,
    pub long_bias: Tensor,
    pub short_head: Tensor,
    pub short_bias: Tensor,
    pub alpha: Tensor,
    pub beta: Tensor,
}

impl Params {
    pub fn zeros(num_nodes: usize, config: &ModelConfig) -> Self {
        let d = config.embed_dim;
        let h = config.hidden_dim();
        Self {
            embeddings: Tensor::zeros(num_nodes, d),
            proj: Tensor::zeros(h, d),
            attn: Tensor::zeros(1, 2 * h + config.edge_dim),
            edge_proj: Tensor::zeros(config.edge_dim, 1),
            long_head: Tensor::zeros(1, 2 * h),
            long_bias: Tensor::scalar(0.0),
            short_head: Tensor::zeros(1, 2 * h),
            short_bias: Tensor::scalar(0.0),
            alpha: Tensor::scalar(0.0),
            beta: Tensor::scalar(0.0),
        }
    }

    pub fn zeros_like(&self) -> Self {
        let z = |t: &Tensor| Tensor::zeros(t.rows, t.cols);
        Self {
            embeddings: z(&self.embeddings),
            proj: z(&self.proj),
            attn: z(&self.attn),
            edge_proj: z(&self.edge_proj),
            long_head: z(&self.long_head),
            long_bias: z(&self.long_bias),
            short_head: z(&self.short_head),
            short_bias: z(&self.short_bias),
            alpha: z(&self.alpha),
            beta: z(&self.beta),
        }
    }

    pub fn tensors(&self) -> [&Tensor; 10] {
        [
            &self.embeddings,
            &self.proj,
            &self.attn,
            &self.edge_proj,
            &self.long_head,
            &self.long_bias,
            &self.short_head,
            &self.short_bias,
            &self.alpha,
            &self.beta,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor; 10] {
        [
            &mut self.embeddings,
            &mut self.proj,
            &mut self.attn,
            &mut self.edge_proj,
            &mut self.long_head,
            &mut self.long_bias,
            &mut self.short_head,
            &mut self.short_bias,
            &mut self.alpha,
            &mut self.beta,
        ]
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors().iter().map(|t| t.data.len()).sum()
    }

    /// Name of the first tensor holding a non-finite entry.
    pub fn first_non_finite(&self) -> Option<&'static str> {
        PARAM_NAMES
            .iter()
            .zip(self.tensors())
            .find(|(_, t)| t.data.iter().any(|v| !v.is_finite()))
            .map(|(n, _)| *n)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: Params,
}

impl Model {
    /// Seeded initialization. Embeddings are uniform in `[-1/sqrt(d), 1/sqrt(d)]`,
    /// dense maps use Glorot-uniform bounds, the fusion coefficients start at 1,
    /// and head biases start so that the initial prediction equals
    /// `initial_rating`.
    pub fn init(config: ModelConfig, graph: &HeteroGraph, initial_rating: f64, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = config.embed_dim;
        let h = config.hidden_dim();
        let e = config.edge_dim;
        let glorot = |fan_in: usize, fan_out: usize| (6.0 / (fan_in + fan_out) as f64).sqrt();

        let embeddings = Tensor::uniform(graph.num_nodes(), d, 1.0 / (d as f64).sqrt(), &mut rng);
        let proj = Tensor::uniform(h, d, glorot(d, h), &mut rng);
        let attn = Tensor::uniform(1, 2 * h + e, glorot(2 * h + e, 1), &mut rng);
        let edge_proj = Tensor::uniform(e, 1, glorot(1, e), &mut rng);
        let long_head = Tensor::uniform(1, 2 * h, glorot(2 * h, 1), &mut rng);
        let short_head = Tensor::uniform(1, 2 * h, glorot(2 * h, 1), &mut rng);

        let (long_bias, short_bias) = if graph.num_spans() > 0 {
            (initial_rating / 2.0, initial_rating / 2.0)
        } else {
            (initial_rating, 0.0)
        };

        Ok(Self {
            config,
            params: Params {
                embeddings,
                proj,
                attn,
                edge_proj,
                long_head,
                long_bias: Tensor::scalar(long_bias),
                short_head,
                short_bias: Tensor::scalar(short_bias),
                alpha: Tensor::scalar(1.0),
                beta: Tensor::scalar(1.0),
            },
        })
    }
}

#[inline]
pub fn leaky_relu(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        slope * x
    }
}

#[inline]
pub fn leaky_relu_grad(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        slope
    }
}

/// Edge feature vector of an edge: its scalar normalized weight.
pub fn edge_feature(weight: f64) -> [f64; 1] {
    [weight]
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

//! Edge-weighted attention layer.
//!
//! For a center node `a` with neighbourhood `N(a)` (its graph neighbours plus
//! itself, the self edge carrying weight 1):
//!
//! ```text
//! z_b      = dropout(W h_b)
//! pre_ab   = attn . [z_a | z_b | W_e e_ab]
//! alpha_ab = softmax_b(leaky_relu(pre_ab))
//! h'_a     = leaky_relu(sum_b alpha_ab z_b)
//! ```
//!
//! Since `e_ab` is the scalar weight `w_ab`, the edge term reduces to
//! `w_ab * (attn_e . W_e)`, and the center / neighbour terms are computed once
//! per node.

use std::collections::HashMap;
use std::hash::{Hash, Hasher};

use rand_chacha::ChaCha8Rng;

use super::{dot, leaky_relu, Model};
use crate::graph::HeteroGraph;
use crate::training::dropout::sample_mask;

pub enum DropoutMode<'a> {
    Off,
    Sample { rate: f64, rng: &'a mut ChaCha8Rng },
    /// Replays a mask recorded by an earlier pass over the same centers.
    Fixed(&'a [f64]),
}

/// Cached forward pass over a set of center nodes.
#[derive(Debug, Clone)]
pub struct Forward {
    pub hidden: usize,
    pub slope: f64,
    /// Node ids whose projection is needed (centers and their neighbours).
    pub support: Vec<usize>,
    pub support_slot: HashMap<usize, usize>,
    /// `support.len() x hidden`, after dropout.
    pub projected: Vec<f64>,
    /// Inverted-dropout scale per projected entry; `None` when dropout is off.
    pub mask: Option<Vec<f64>>,
    /// Neighbour-side attention score `attn_b . z_b` per support node.
    pub nbr_score: Vec<f64>,
    /// Center-side attention score `attn_a . z_a` per center.
    pub center_score: Vec<f64>,
    /// `attn_e . W_e`.
    pub edge_scale: f64,
    pub centers: Vec<usize>,
    pub center_slot: HashMap<usize, usize>,
    /// Per center, a range into the flattened neighbourhood arrays.
    pub nbr_start: Vec<usize>,
    pub nbr_support: Vec<usize>,
    pub nbr_weight: Vec<f64>,
    pub pre: Vec<f64>,
    pub alpha: Vec<f64>,
    /// `centers.len() x hidden`, before the output non-linearity.
    pub mixed: Vec<f64>,
    /// `centers.len() x hidden`.
    pub output: Vec<f64>,
}

impl Forward {
    /// Runs the attention layer for `centers` (node ids; duplicates are
    /// ignored after their first occurrence).
    pub fn run(model: &Model, graph: &HeteroGraph, centers: &[usize], dropout: DropoutMode<'_>) -> Self {
        let params = &model.params;
        let hidden = model.config.hidden_dim();
        let dim = model.config.embed_dim;
        let slope = model.config.leaky_slope;
        let attn = &params.attn.data;
        let (attn_center, rest) = attn.split_at(hidden);
        let (attn_nbr, attn_edge) = rest.split_at(hidden);
        let edge_scale = dot(attn_edge, &params.edge_proj.data);

        let mut unique_centers = Vec::new();
        let mut center_slot = HashMap::new();
        for &c in centers {
            if !center_slot.contains_key(&c) {
                center_slot.insert(c, unique_centers.len());
                unique_centers.push(c);
            }
        }

        let mut support = Vec::new();
        let mut support_slot = HashMap::new();
        let mut add = |n: usize, support: &mut Vec<usize>| -> usize {
            *support_slot.entry(n).or_insert_with(|| {
                support.push(n);
                support.len() - 1
            })
        };
        let mut nbr_start = Vec::with_capacity(unique_centers.len() + 1);
        let mut nbr_support = Vec::new();
        let mut nbr_weight = Vec::new();
        for &c in &unique_centers {
            nbr_start.push(nbr_support.len());
            nbr_support.push(add(c, &mut support));
            nbr_weight.push(1.0);
            for e in graph.neighbors(c) {
                nbr_support.push(add(e.target, &mut support));
                nbr_weight.push(e.weight);
            }
        }
        nbr_start.push(nbr_support.len());

        let mut projected = vec![0.0; support.len() * hidden];
        for (slot, &node) in support.iter().enumerate() {
            let h = params.embeddings.row(node);
            let z = &mut projected[slot * hidden..(slot + 1) * hidden];
            for (k, zk) in z.iter_mut().enumerate() {
                *zk = dot(&params.proj.data[k * dim..(k + 1) * dim], h);
            }
        }
        let mask = match dropout {
            DropoutMode::Off => None,
            DropoutMode::Sample { rate, rng } => {
                if rate > 0.0 {
                    Some(sample_mask(projected.len(), rate, rng))
                } else {
                    None
                }
            }
            DropoutMode::Fixed(m) => {
                assert_eq!(m.len(), projected.len(), "dropout mask shape mismatch");
                Some(m.to_vec())
            }
        };
        if let Some(m) = &mask {
            for (z, s) in projected.iter_mut().zip(m) {
                *z *= s;
            }
        }

        let nbr_score: Vec<f64> = projected.chunks_exact(hidden).map(|z| dot(attn_nbr, z)).collect();

        let n_centers = unique_centers.len();
        let mut center_score = Vec::with_capacity(n_centers);
        let mut pre = vec![0.0; nbr_support.len()];
        let mut alpha = vec![0.0; nbr_support.len()];
        let mut mixed = vec![0.0; n_centers * hidden];
        let mut output = vec![0.0; n_centers * hidden];
        for c in 0..n_centers {
            let range = nbr_start[c]..nbr_start[c + 1];
            let own = nbr_support[range.start];
            let score = dot(attn_center, &projected[own * hidden..(own + 1) * hidden]);
            center_score.push(score);

            let mut max_logit = f64::NEG_INFINITY;
            for k in range.clone() {
                pre[k] = score + nbr_score[nbr_support[k]] + nbr_weight[k] * edge_scale;
                let logit = leaky_relu(pre[k], slope);
                alpha[k] = logit;
                max_logit = max_logit.max(logit);
            }
            let mut total = 0.0;
            for a in &mut alpha[range.clone()] {
                *a = (*a - max_logit).exp();
                total += *a;
            }
            for a in &mut alpha[range.clone()] {
                *a /= total;
            }
            debug_assert!(
                (alpha[range.clone()].iter().sum::<f64>() - 1.0).abs() < 1e-9,
                "attention coefficients do not sum to one"
            );

            let m = &mut mixed[c * hidden..(c + 1) * hidden];
            for k in range {
                let s = nbr_support[k];
                let z = &projected[s * hidden..(s + 1) * hidden];
                let a = alpha[k];
                for (mj, zj) in m.iter_mut().zip(z) {
                    *mj += a * zj;
                }
            }
            for (o, mj) in output[c * hidden..(c + 1) * hidden].iter_mut().zip(m.iter()) {
                *o = leaky_relu(*mj, slope);
            }
        }

        Self {
            hidden,
            slope,
            support,
            support_slot,
            projected,
            mask,
            nbr_score,
            center_score,
            edge_scale,
            centers: unique_centers,
            center_slot,
            nbr_start,
            nbr_support,
            nbr_weight,
            pre,
            alpha,
            mixed,
            output,
        }
    }

    /// Aggregated representation of a center node.
    pub fn representation(&self, node: usize) -> Option<&[f64]> {
        let c = *self.center_slot.get(&node)?;
        Some(&self.output[c * self.hidden..(c + 1) * self.hidden])
    }

    /// `(neighbour node id, alpha)` for a center, self first.
    pub fn coefficients(&self, node: usize) -> Option<Vec<(usize, f64)>> {
        let c = *self.center_slot.get(&node)?;
        Some(
            (self.nbr_start[c]..self.nbr_start[c + 1])
                .map(|k| (self.support[self.nbr_support[k]], self.alpha[k]))
                .collect(),
        )
    }

    /// Hash of every piecewise-linear branch taken in this pass.
    pub fn branch_signature(&self) -> u64 {
        let mut h = std::collections::hash_map::DefaultHasher::new();
        for v in self.pre.iter().chain(&self.mixed) {
            (*v > 0.0).hash(&mut h);
        }
        h.finish()
    }
}

/// Attention coefficients of one node at inference, self first.
pub fn attention_coefficients(model: &Model, graph: &HeteroGraph, node: usize) -> Vec<(usize, f64)> {
    Forward::run(model, graph, &[node], DropoutMode::Off)
        .coefficients(node)
        .expect("center present")
}

/// Aggregated representation `h'` of one node at inference.
pub fn aggregate_node(model: &Model, graph: &HeteroGraph, node: usize) -> Vec<f64> {
    Forward::run(model, graph, &[node], DropoutMode::Off)
        .representation(node)
        .expect("center present")
        .to_vec()
}

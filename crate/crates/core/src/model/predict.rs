use super::forward::{DropoutMode, Forward};
use super::{dot, leaky_relu, Model, Params};
use crate::dataset::{MAX_RATING, MIN_RATING};
use crate::graph::HeteroGraph;

fn head(weights: &[f64], bias: f64, left: &[f64], right: &[f64], slope: f64) -> f64 {
    let (wl, wr) = weights.split_at(left.len());
    leaky_relu(dot(wl, left) + dot(wr, right) + bias, slope)
}

/// Long-term head on `(user representation | item representation)`.
pub fn predict_long(params: &Params, slope: f64, user: &[f64], item: &[f64]) -> f64 {
    head(&params.long_head.data, params.long_bias.value(), user, item, slope)
}

/// Short-term head on `(span representation | item representation)`.
pub fn predict_short(params: &Params, slope: f64, span: &[f64], item: &[f64]) -> f64 {
    head(&params.short_head.data, params.short_bias.value(), span, item, slope)
}

pub fn fuse(short: f64, long: f64, alpha: f64, beta: f64) -> f64 {
    alpha * short + beta * long
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    /// Unclamped model output, or the fallback value for cold pairs.
    pub raw: f64,
    pub cold: bool,
    pub used_span: bool,
}

impl Prediction {
    pub fn clamped(&self) -> f64 {
        self.raw.clamp(MIN_RATING, MAX_RATING)
    }
}

/// Inference-time predictor with every node representation precomputed.
pub struct Predictor<'a> {
    model: &'a Model,
    graph: &'a HeteroGraph,
    forward: Forward,
    fallback: f64,
}

impl<'a> Predictor<'a> {
    /// `fallback` is served for users or items without training interactions.
    pub fn new(model: &'a Model, graph: &'a HeteroGraph, fallback: f64) -> Self {
        let all: Vec<usize> = (0..graph.num_nodes()).collect();
        let forward = Forward::run(model, graph, &all, DropoutMode::Off);
        Self {
            model,
            graph,
            forward,
            fallback,
        }
    }

    pub fn forward(&self) -> &Forward {
        &self.forward
    }

    pub fn predict(&self, user: usize, item: usize, timestamp: i64) -> Prediction {
        if !self.graph.user_seen(user) || !self.graph.item_seen(item) {
            return Prediction {
                raw: self.fallback,
                cold: true,
                used_span: false,
            };
        }
        let p = &self.model.params;
        let slope = self.model.config.leaky_slope;
        let rep = |node| self.forward.representation(node).expect("all nodes are centers");
        let h_item = rep(self.graph.item_node(item));
        let long = predict_long(p, slope, rep(self.graph.user_node(user)), h_item);
        let (raw, used_span) = match self.graph.span_for_query(user, timestamp) {
            Some(span) => {
                let short = predict_short(p, slope, rep(span), h_item);
                (fuse(short, long, p.alpha.value(), p.beta.value()), true)
            }
            None => (p.beta.value() * long, false),
        };
        Prediction {
            raw,
            cold: false,
            used_span,
        }
    }
}

//! Training loop: mean squared error, hand-derived gradients, inverted
//! dropout on projected node representations, and Adam.

pub mod adam;
pub mod backward;
pub mod dropout;
pub mod gradcheck;

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Rating;
use crate::error::{Error, Result};
use crate::eval::{evaluate_ratings, global_mean};
use crate::graph::HeteroGraph;
use crate::model::{DropoutMode, Model, ModelConfig};

pub use adam::{adam_step, AdamConfig, AdamState};
pub use backward::{evaluate_batch, squared_error, BatchResult, Example};
pub use dropout::apply_dropout;
pub use gradcheck::{check_gradients, finite_diff_grad, GradCheckOptions, GradReport};

/// Validation MAE above which training is aborted.
pub const DIVERGENCE_MAE: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub batch_size: usize,
    pub dropout_rate: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 15,
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            batch_size: 256,
            dropout_rate: 0.6,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::Invalid("learning_rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Invalid("dropout rate must be in [0, 1)".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Invalid("batch_size must be at least 1".into()));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
        }
    }
}

/// One line of the per-epoch trace. `seconds` is the only wall-clock field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_mae: f64,
    pub val_rmse: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters of the epoch with the lowest validation MAE.
    pub model: Model,
    pub trace: Vec<EpochMetrics>,
    /// 0 when no epoch ran.
    pub best_epoch: usize,
    /// Metrics of the untrained model on the validation split.
    pub initial_val_mae: f64,
    pub initial_val_rmse: f64,
}

/// Maps training ratings to node-id examples. Each example's span is the
/// span node holding that interaction.
pub fn examples(graph: &HeteroGraph, ratings: &[Rating]) -> Vec<Example> {
    ratings
        .iter()
        .map(|r| Example {
            user: graph.user_node(r.user),
            item: graph.item_node(r.item),
            span: graph.span_for_query(r.user, r.timestamp),
            target: r.rating,
        })
        .collect()
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn train(
    graph: &HeteroGraph,
    train_split: &[Rating],
    val_split: &[Rating],
    model_config: ModelConfig,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if train_split.is_empty() {
        return Err(Error::Invalid("training split is empty".into()));
    }
    if val_split.is_empty() {
        return Err(Error::Invalid("validation split is empty".into()));
    }
    let mean = global_mean(train_split)?;
    let mut model = Model::init(model_config, graph, mean, config.seed)?;
    let initial = evaluate_ratings(&model, graph, val_split, mean)?;

    let mut train_examples = examples(graph, train_split);
    let mut shuffle_rng = stream_rng(config.seed, 1);
    let mut dropout_rng = stream_rng(config.seed, 2);
    let adam = config.adam();
    let mut state = AdamState::new(&model.params);

    let mut best = (f64::INFINITY, 0usize, model.params.clone());
    let mut trace = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        let started = Instant::now();
        train_examples.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        for batch in train_examples.chunks(config.batch_size) {
            let result = evaluate_batch(
                &model,
                graph,
                batch,
                DropoutMode::Sample { rate: config.dropout_rate, rng: &mut dropout_rng },
                true,
            );
            let grads = result.grads.expect("gradients requested");
            if let Some(name) = grads.first_non_finite() {
                return Err(Error::NonFinite(format!("gradient of {name} at epoch {epoch}")));
            }
            adam_step(&mut model.params, &grads, &mut state, &adam)?;
            loss_sum += result.loss * batch.len() as f64;
        }
        let metrics = evaluate_ratings(&model, graph, val_split, mean)?;
        let line = EpochMetrics {
            epoch,
            train_loss: loss_sum / train_examples.len() as f64,
            val_mae: metrics.mae,
            val_rmse: metrics.rmse,
            seconds: started.elapsed().as_secs_f64(),
        };
        trace.push(line);
        if !(metrics.mae <= DIVERGENCE_MAE) {
            return Err(Error::Diverged {
                epoch,
                val_mae: metrics.mae,
            });
        }
        if metrics.mae < best.0 {
            best = (metrics.mae, epoch, model.params.clone());
        }
    }

    let best_epoch = best.1;
    if best_epoch > 0 {
        model.params = best.2;
    }
    Ok(TrainOutcome {
        model,
        trace,
        best_epoch,
        initial_val_mae: initial.mae,
        initial_val_rmse: initial.rmse,
    })
}

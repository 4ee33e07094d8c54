//! Central finite differences against the analytic gradient.

use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::backward::{evaluate_batch, Example};
use crate::graph::{HeteroGraph, NodeKind};
use crate::model::{DropoutMode, Model, PARAM_NAMES};

/// Magnitude below which errors are measured in absolute rather than
/// relative terms.
pub const RELATIVE_FLOOR: f64 = 1e-5;

/// `(f(x + eps) - f(x - eps)) / (2 eps)`.
pub fn central_difference(mut f: impl FnMut(f64) -> f64, x: f64, eps: f64) -> f64 {
    (f(x + eps) - f(x - eps)) / (2.0 * eps)
}

/// Index of one scalar parameter: tensor position in `PARAM_NAMES` and
/// flat offset inside it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Coordinate {
    pub tensor: usize,
    pub index: usize,
}

/// Finite-difference derivative of the batch loss along one coordinate,
/// with dropout off or replaying `mask`. The second value is false when
/// the two probes took different piecewise-linear branches.
pub fn finite_diff_grad(
    model: &Model,
    graph: &HeteroGraph,
    batch: &[Example],
    coord: Coordinate,
    eps: f64,
    mask: Option<&[f64]>,
) -> (f64, bool) {
    let mut probe = model.clone();
    let x = model.params.tensors()[coord.tensor].data[coord.index];
    let mut signatures = Vec::with_capacity(2);
    let value = central_difference(
        |v| {
            probe.params.tensors_mut()[coord.tensor].data[coord.index] = v;
            let mode = match mask {
                Some(m) => DropoutMode::Fixed(m),
                None => DropoutMode::Off,
            };
            let r = evaluate_batch(&probe, graph, batch, mode, false);
            signatures.push(r.signature);
            r.loss
        },
        x,
        eps,
    );
    (value, signatures[0] == signatures[1])
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

#[derive(Debug, Clone)]
pub struct GradCheckOptions {
    pub eps: f64,
    /// Coordinates sampled per family; smaller families are checked fully.
    pub max_per_family: usize,
    pub seed: u64,
    /// Replay this dropout mask in both passes.
    pub mask: Option<Vec<f64>>,
    /// Scales the analytic gradient before comparison (test hook).
    pub corrupt: Option<f64>,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            eps: 1e-5,
            max_per_family: 64,
            seed: 0,
            mask: None,
            corrupt: None,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct FamilyError {
    pub max_relative_error: f64,
    pub checked: usize,
    /// Coordinates whose probes straddled a LeakyReLU kink.
    pub skipped_kinks: usize,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct GradReport {
    pub families: BTreeMap<String, FamilyError>,
    pub overall: f64,
}

impl GradReport {
    pub fn passed(&self, tolerance: f64) -> bool {
        self.overall < tolerance && self.families.values().all(|f| f.checked > 0 || f.skipped_kinks == 0)
    }
}

/// Parameter families: embedding rows split by node kind, then every other
/// tensor on its own.
fn families(model: &Model, graph: &HeteroGraph) -> Vec<(String, Vec<Coordinate>)> {
    let d = model.config.embed_dim;
    let mut out: Vec<(String, Vec<Coordinate>)> = Vec::new();
    for (kind, name) in [
        (NodeKind::User, "embeddings.user"),
        (NodeKind::Item, "embeddings.item"),
        (NodeKind::Span, "embeddings.span"),
    ] {
        let coords: Vec<Coordinate> = (0..graph.num_nodes())
            .filter(|&n| graph.kind(n) == kind)
            .flat_map(|n| (0..d).map(move |j| Coordinate { tensor: 0, index: n * d + j }))
            .collect();
        if !coords.is_empty() {
            out.push((name.to_string(), coords));
        }
    }
    for (t, tensor) in model.params.tensors().iter().enumerate().skip(1) {
        let coords = (0..tensor.data.len()).map(|index| Coordinate { tensor: t, index }).collect();
        out.push((PARAM_NAMES[t].to_string(), coords));
    }
    out
}

pub fn check_gradients(model: &Model, graph: &HeteroGraph, batch: &[Example], options: &GradCheckOptions) -> GradReport {
    let mode = match &options.mask {
        Some(m) => DropoutMode::Fixed(m),
        None => DropoutMode::Off,
    };
    let mut grads = evaluate_batch(model, graph, batch, mode, true)
        .grads
        .expect("gradients requested");
    if let Some(scale) = options.corrupt {
        for t in grads.tensors_mut() {
            t.data.iter_mut().for_each(|v| *v *= scale);
        }
    }
    let analytic = grads.tensors();

    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut report = GradReport::default();
    for (name, coords) in families(model, graph) {
        let chosen: Vec<Coordinate> = if coords.len() > options.max_per_family {
            let mut idx = sample(&mut rng, coords.len(), options.max_per_family).into_vec();
            idx.sort_unstable();
            idx.into_iter().map(|k| coords[k]).collect()
        } else {
            coords
        };
        let mut fam = FamilyError::default();
        for c in chosen {
            let (numeric, smooth) = finite_diff_grad(model, graph, batch, c, options.eps, options.mask.as_deref());
            if !smooth {
                fam.skipped_kinks += 1;
                continue;
            }
            let err = relative_error(analytic[c.tensor].data[c.index], numeric);
            fam.max_relative_error = fam.max_relative_error.max(err);
            fam.checked += 1;
        }
        report.overall = report.overall.max(fam.max_relative_error);
        report.families.insert(name, fam);
    }
    report
}

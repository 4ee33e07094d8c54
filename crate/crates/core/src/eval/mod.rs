//! Error metrics, significance testing, the global-mean baseline, and the
//! experiment / sweep harness.

pub mod experiment;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::dataset::Rating;
use crate::error::{Error, Result};
use crate::graph::HeteroGraph;
use crate::model::{Model, Predictor};

pub use experiment::{run_experiment, run_sweep, SweepAxis, SweepRow, SweepSpec};

fn check_lengths(predictions: &[f64], targets: &[f64]) -> Result<()> {
    if predictions.is_empty() {
        return Err(Error::Invalid("metrics need at least one prediction".into()));
    }
    if predictions.len() != targets.len() {
        return Err(Error::Invalid(format!(
            "{} predictions for {} targets",
            predictions.len(),
            targets.len()
        )));
    }
    Ok(())
}

pub fn mae(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    check_lengths(predictions, targets)?;
    let total: f64 = predictions.iter().zip(targets).map(|(p, t)| (p - t).abs()).sum();
    Ok(total / predictions.len() as f64)
}

pub fn rmse(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    check_lengths(predictions, targets)?;
    let total: f64 = predictions.iter().zip(targets).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok((total / predictions.len() as f64).sqrt())
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Welch's unequal-variance t statistic and Welch-Satterthwaite degrees
/// of freedom.
pub fn welch_statistic(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::Invalid("each sample needs at least two values".into()));
    }
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let sa = va / a.len() as f64;
    let sb = vb / b.len() as f64;
    let t = (ma - mb) / (sa + sb).sqrt();
    let df = (sa + sb).powi(2)
        / (sa * sa / (a.len() as f64 - 1.0) + sb * sb / (b.len() as f64 - 1.0));
    Ok((t, df))
}

/// Two-sided p-value of Welch's t-test. With zero variance in both
/// samples the result is 1 for equal means and 0 otherwise.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::Invalid("each sample needs at least two values".into()));
    }
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    if va == 0.0 && vb == 0.0 {
        return Ok(if ma == mb { 1.0 } else { 0.0 });
    }
    let (t, df) = welch_statistic(a, b)?;
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::Invalid(e.to_string()))?;
    Ok((2.0 * dist.cdf(-t.abs())).min(1.0))
}

pub fn global_mean(train: &[Rating]) -> Result<f64> {
    if train.is_empty() {
        return Err(Error::Invalid("global mean of an empty split".into()));
    }
    Ok(train.iter().map(|r| r.rating).sum::<f64>() / train.len() as f64)
}

/// Predicts the training mean rating for every pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlobalMeanBaseline {
    pub mean: f64,
}

impl GlobalMeanBaseline {
    pub fn fit(train: &[Rating]) -> Result<Self> {
        Ok(Self {
            mean: global_mean(train)?,
        })
    }

    pub fn predict(&self, _user: usize, _item: usize) -> f64 {
        self.mean
    }

    pub fn evaluate(&self, ratings: &[Rating]) -> Result<SplitMetrics> {
        let preds: Vec<f64> = ratings.iter().map(|r| self.predict(r.user, r.item)).collect();
        let targets: Vec<f64> = ratings.iter().map(|r| r.rating).collect();
        Ok(SplitMetrics {
            mae: mae(&preds, &targets)?,
            rmse: rmse(&preds, &targets)?,
            n: ratings.len(),
            coverage: 1.0,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitMetrics {
    pub mae: f64,
    pub rmse: f64,
    pub n: usize,
    /// Fraction of pairs answered by the model rather than the fallback.
    pub coverage: f64,
}

/// Metrics of the model on clamped predictions. Pairs whose user or item has
/// no training interaction are served `fallback`.
pub fn evaluate_ratings(model: &Model, graph: &HeteroGraph, ratings: &[Rating], fallback: f64) -> Result<SplitMetrics> {
    let predictor = Predictor::new(model, graph, fallback);
    evaluate_with(&predictor, ratings)
}

pub fn evaluate_with(predictor: &Predictor<'_>, ratings: &[Rating]) -> Result<SplitMetrics> {
    let mut preds = Vec::with_capacity(ratings.len());
    let mut warm = 0usize;
    for r in ratings {
        let p = predictor.predict(r.user, r.item, r.timestamp);
        warm += usize::from(!p.cold);
        preds.push(p.clamped());
    }
    let targets: Vec<f64> = ratings.iter().map(|r| r.rating).collect();
    Ok(SplitMetrics {
        mae: mae(&preds, &targets)?,
        rmse: rmse(&preds, &targets)?,
        n: ratings.len(),
        coverage: warm as f64 / ratings.len() as f64,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mae: f64,
    pub rmse: f64,
    pub n: usize,
    pub coverage: f64,
    pub seed: u64,
    pub config_digest: String,
}

impl MetricsReport {
    pub fn from_split(m: SplitMetrics, seed: u64, config_digest: &str) -> Self {
        Self {
            mae: m.mae,
            rmse: m.rmse,
            n: m.n,
            coverage: m.coverage,
            seed,
            config_digest: config_digest.to_string(),
        }
    }
}

pub fn mean_and_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

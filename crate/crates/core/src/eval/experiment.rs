use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{evaluate_ratings, GlobalMeanBaseline, MetricsReport, SplitMetrics};
use crate::config::RunConfig;
use crate::dataset::{split, Dataset, Splits};
use crate::error::{Error, Result};
use crate::graph::{build_graph, AblationFlags, HeteroGraph};
use crate::training::{train, TrainOutcome};

/// Split and graph for one configuration. The split depends only on
/// `split_seed`, so every run seed sees the same partition.
pub fn prepare(dataset: &Dataset, config: &RunConfig) -> Result<(Splits, HeteroGraph)> {
    config.validate()?;
    let splits = split(dataset, &config.split_spec())?;
    let graph = build_graph(dataset, &splits.train, &config.graph_config(dataset)?)?;
    Ok((splits, graph))
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: MetricsReport,
    pub baseline: SplitMetrics,
    pub training: TrainOutcome,
    pub wall_seconds: f64,
}

/// Trains with one seed on a prepared split and graph, then scores the test
/// split.
pub fn run_prepared(splits: &Splits, graph: &HeteroGraph, config: &RunConfig, seed: u64) -> Result<RunOutcome> {
    let started = Instant::now();
    let training = train(graph, &splits.train, &splits.val, config.model_config(), &config.train_config(seed))?;
    let baseline = GlobalMeanBaseline::fit(&splits.train)?;
    let metrics = evaluate_ratings(&training.model, graph, &splits.test, baseline.mean)?;
    Ok(RunOutcome {
        report: MetricsReport::from_split(metrics, seed, &config.digest()),
        baseline: baseline.evaluate(&splits.test)?,
        training,
        wall_seconds: started.elapsed().as_secs_f64(),
    })
}

/// split, build graph, train and test once per configured seed.
pub fn run_experiment(dataset: &Dataset, config: &RunConfig) -> Result<Vec<MetricsReport>> {
    let (splits, graph) = prepare(dataset, config)?;
    config
        .seeds
        .iter()
        .map(|&seed| run_prepared(&splits, &graph, config, seed).map(|o| o.report))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    EmbedDim,
    Dropout,
    SpanDays,
    Ablation,
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepAxis::EmbedDim => "embed_dim",
            SweepAxis::Dropout => "dropout",
            SweepAxis::SpanDays => "span_days",
            SweepAxis::Ablation => "ablation",
        })
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "embed_dim" => Ok(SweepAxis::EmbedDim),
            "dropout" => Ok(SweepAxis::Dropout),
            "span_days" => Ok(SweepAxis::SpanDays),
            "ablation" => Ok(SweepAxis::Ablation),
            other => Err(Error::Config(format!("unknown sweep axis {other:?}"))),
        }
    }
}

impl SweepAxis {
    pub fn default_values(&self) -> Vec<String> {
        let v: &[&str] = match self {
            SweepAxis::EmbedDim => &["8", "16", "32", "64", "128"],
            SweepAxis::Dropout => &["0", "0.2", "0.4", "0.6", "0.8"],
            SweepAxis::SpanDays => &["15", "30", "90", "180"],
            SweepAxis::Ablation => &["full", "no_edge_weights", "no_span_nodes", "no_item_item", "no_user_user"],
        };
        v.iter().map(|s| s.to_string()).collect()
    }

    /// The base configuration with this axis set to `value`.
    pub fn apply(&self, base: &RunConfig, value: &str) -> Result<RunConfig> {
        let mut c = base.clone();
        match self {
            SweepAxis::EmbedDim => c.set("embed_dim", value)?,
            SweepAxis::Dropout => c.set("dropout", value)?,
            SweepAxis::SpanDays => c.set("span_days", value)?,
            SweepAxis::Ablation => {
                c.flags = AblationFlags::by_name(value)
                    .ok_or_else(|| Error::Config(format!("unknown ablation {value:?}")))?
            }
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub values: Vec<String>,
    pub seeds: Vec<u64>,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() || self.seeds.is_empty() {
            return Err(Error::Invalid("sweep needs at least one value and one seed".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis: SweepAxis,
    pub value: String,
    pub seed: u64,
    pub mae: f64,
    pub rmse: f64,
    pub coverage: f64,
    pub wall_seconds: f64,
    pub report: MetricsReport,
}

impl SweepRow {
    pub const CSV_HEADER: &'static str = "axis,value,seed,mae,rmse,coverage,wall_seconds";

    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{:.3}",
            self.axis, self.value, self.seed, self.mae, self.rmse, self.coverage, self.wall_seconds
        )
    }
}

/// Every `(value, seed)` cell, values outer and seeds inner. `on_row` sees
/// each row as soon as it is finished.
pub fn run_sweep(
    dataset: &Dataset,
    base: &RunConfig,
    spec: &SweepSpec,
    mut on_row: impl FnMut(&SweepRow),
) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    let mut rows = Vec::with_capacity(spec.values.len() * spec.seeds.len());
    for value in &spec.values {
        let config = spec.axis.apply(base, value)?;
        let (splits, graph) = prepare(dataset, &config)?;
        for &seed in &spec.seeds {
            let outcome = run_prepared(&splits, &graph, &config, seed)?;
            let row = SweepRow {
                axis: spec.axis,
                value: value.clone(),
                seed,
                mae: outcome.report.mae,
                rmse: outcome.report.rmse,
                coverage: outcome.report.coverage,
                wall_seconds: outcome.wall_seconds,
                report: outcome.report,
            };
            on_row(&row);
            rows.push(row);
        }
    }
    Ok(rows)
}

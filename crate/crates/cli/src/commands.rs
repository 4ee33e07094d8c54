use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::Context;
use hetrec::dataset::{build_dataset, load_dataset, write_ratings, write_trust, Dataset, Splits};
use hetrec::eval::experiment::prepare;
use hetrec::eval::{
    evaluate_with, global_mean, mean_and_std, run_sweep, welch_t_test, GlobalMeanBaseline, MetricsReport, SweepAxis,
    SweepRow, SweepSpec,
};
use hetrec::graph::export::{audit, export};
use hetrec::graph::{GraphConfig, HeteroGraph, SpanParams};
use hetrec::model::checkpoint::Checkpoint;
use hetrec::model::{DropoutMode, Model, Predictor};
use hetrec::synth;
use hetrec::training::{check_gradients, evaluate_batch, examples, train as fit, GradCheckOptions, GradReport};
use hetrec::{Error, RunConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// Gradient agreement required by `gradcheck`.
const GRADIENT_TOLERANCE: f64 = 1e-4;

pub enum Outcome {
    Success,
    /// The command ran but a check it performs did not pass.
    Failed,
}

fn load(config: &RunConfig) -> anyhow::Result<Dataset> {
    config.check_inputs_exist()?;
    Ok(load_dataset(&config.ratings, &config.trust)?)
}

/// Creates the output directory and writes the effective configuration.
fn prepare_out_dir(config: &RunConfig) -> anyhow::Result<()> {
    fs::create_dir_all(&config.out_dir).with_context(|| format!("creating {}", config.out_dir.display()))?;
    write_file(&config.out_dir.join("config.txt"), config.to_text().as_bytes())
}

fn write_file(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn write_json(path: &Path, value: &impl Serialize) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_file(path, text.as_bytes())
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

pub fn stats(config: &RunConfig) -> anyhow::Result<Outcome> {
    let dataset = load(config)?;
    println!("{}", serde_json::to_string_pretty(&dataset.summary())?);
    Ok(Outcome::Success)
}

fn load_and_prepare(config: &RunConfig) -> anyhow::Result<(Dataset, Splits, HeteroGraph)> {
    let dataset = load(config)?;
    let (splits, graph) = prepare(&dataset, config)?;
    Ok((dataset, splits, graph))
}

pub fn build_graph(config: &RunConfig) -> anyhow::Result<Outcome> {
    let (dataset, splits, graph) = load_and_prepare(config)?;
    prepare_out_dir(config)?;
    write_json(&config.out_dir.join("graph.json"), &export(&graph, &dataset))?;
    let report = audit(&graph, &splits.train);
    write_json(&config.out_dir.join("audit.json"), &report)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    if report.passed {
        Ok(Outcome::Success)
    } else {
        eprintln!("graph audit failed");
        Ok(Outcome::Failed)
    }
}

#[derive(Serialize)]
struct TrainSummary {
    seed: u64,
    epochs: usize,
    best_epoch: usize,
    initial_val_mae: f64,
    initial_val_rmse: f64,
    best_val_mae: Option<f64>,
    best_val_rmse: Option<f64>,
    checkpoint: String,
    trace: String,
}

pub fn train(config: &RunConfig) -> anyhow::Result<Outcome> {
    let (_, splits, graph) = load_and_prepare(config)?;
    prepare_out_dir(config)?;
    for &seed in &config.seeds {
        let outcome = fit(&graph, &splits.train, &splits.val, config.model_config(), &config.train_config(seed))?;

        let trace_path = config.out_dir.join(format!("trace-seed{seed}.jsonl"));
        let mut trace = create(&trace_path)?;
        for line in &outcome.trace {
            serde_json::to_writer(&mut trace, line)?;
            trace.write_all(b"\n")?;
        }
        trace.flush()?;

        let ckpt_path = config.out_dir.join(format!("checkpoint-seed{seed}.bin"));
        Checkpoint { model: outcome.model, digest: config.digest(), seed }.save(&ckpt_path)?;

        let best = outcome.trace.iter().find(|m| m.epoch == outcome.best_epoch);
        let summary = TrainSummary {
            seed,
            epochs: outcome.trace.len(),
            best_epoch: outcome.best_epoch,
            initial_val_mae: outcome.initial_val_mae,
            initial_val_rmse: outcome.initial_val_rmse,
            best_val_mae: best.map(|m| m.val_mae),
            best_val_rmse: best.map(|m| m.val_rmse),
            checkpoint: ckpt_path.display().to_string(),
            trace: trace_path.display().to_string(),
        };
        println!("{}", serde_json::to_string(&summary)?);
    }
    Ok(Outcome::Success)
}

pub fn evaluate(config: &RunConfig, checkpoint: Option<&Path>, baseline: bool, split: &str) -> anyhow::Result<Outcome> {
    let (_, splits, graph) = load_and_prepare(config)?;
    let ratings = match split {
        "train" => &splits.train,
        "val" => &splits.val,
        _ => &splits.test,
    };
    let fallback = global_mean(&splits.train)?;
    let (report, name) = if baseline {
        let metrics = GlobalMeanBaseline::fit(&splits.train)?.evaluate(ratings)?;
        let seed = config.seeds[0];
        (MetricsReport::from_split(metrics, seed, &config.digest()), format!("baseline-{split}.json"))
    } else {
        let path = checkpoint.expect("clap requires --checkpoint without --baseline");
        let ck = Checkpoint::load(path)?;
        if ck.digest != config.digest() {
            return Err(Error::Invalid(format!(
                "checkpoint was trained under config digest {} but the current config has digest {}",
                ck.digest,
                config.digest()
            ))
            .into());
        }
        if ck.model.params.embeddings.rows != graph.num_nodes() {
            return Err(Error::Invalid("checkpoint does not match the graph built from this config".into()).into());
        }
        let predictor = Predictor::new(&ck.model, &graph, fallback);
        let metrics = evaluate_with(&predictor, ratings)?;
        (MetricsReport::from_split(metrics, ck.seed, &config.digest()), format!("report-seed{}-{split}.json", ck.seed))
    };
    prepare_out_dir(config)?;
    write_json(&config.out_dir.join(name), &report)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(Outcome::Success)
}

/// Runs a sweep, streaming rows to `<stem>.csv` and `<stem>.jsonl`, then
/// prints mean and standard deviation of test MAE per value.
fn sweep_to_files(config: &RunConfig, spec: &SweepSpec, stem: &str) -> anyhow::Result<Vec<SweepRow>> {
    let dataset = load(config)?;
    prepare_out_dir(config)?;
    let mut csv = create(&config.out_dir.join(format!("{stem}.csv")))?;
    let mut jsonl = create(&config.out_dir.join(format!("{stem}.jsonl")))?;
    writeln!(csv, "{}", SweepRow::CSV_HEADER)?;
    let mut write_error: Option<anyhow::Error> = None;
    let rows = run_sweep(&dataset, config, spec, |row| {
        eprintln!("{} = {} seed {}: mae {:.4} rmse {:.4}", row.axis, row.value, row.seed, row.mae, row.rmse);
        let result = (|| -> anyhow::Result<()> {
            writeln!(csv, "{}", row.csv_line())?;
            serde_json::to_writer(&mut jsonl, row)?;
            jsonl.write_all(b"\n")?;
            csv.flush()?;
            jsonl.flush()?;
            Ok(())
        })();
        if let Err(e) = result {
            write_error.get_or_insert(e);
        }
    })?;
    if let Some(e) = write_error {
        return Err(e);
    }
    for value in &spec.values {
        let maes: Vec<f64> = rows.iter().filter(|r| &r.value == value).map(|r| r.mae).collect();
        let (mean, std) = mean_and_std(&maes);
        println!("{} = {value}: mae {mean:.4} +- {std:.4} over {} seeds", spec.axis, maes.len());
    }
    Ok(rows)
}

pub fn sweep(config: &RunConfig, axis: SweepAxis, values: Vec<String>) -> anyhow::Result<Outcome> {
    let values = if values.is_empty() { axis.default_values() } else { values };
    let spec = SweepSpec { axis, values, seeds: config.seeds.clone() };
    sweep_to_files(config, &spec, &format!("sweep-{axis}"))?;
    Ok(Outcome::Success)
}

pub fn ablate(config: &RunConfig) -> anyhow::Result<Outcome> {
    let axis = SweepAxis::Ablation;
    let spec = SweepSpec { axis, values: axis.default_values(), seeds: config.seeds.clone() };
    let rows = sweep_to_files(config, &spec, "ablation")?;
    let maes = |v: &str| rows.iter().filter(|r| r.value == v).map(|r| r.mae).collect::<Vec<f64>>();
    let full = maes("full");
    if full.len() >= 2 {
        for value in &spec.values[1..] {
            let p = welch_t_test(&full, &maes(value))?;
            println!("full vs {value}: Welch p = {p:.4}");
        }
    }
    Ok(Outcome::Success)
}

#[derive(Serialize)]
struct GradcheckLine<'a> {
    seed: u64,
    dropout_mask: bool,
    report: &'a GradReport,
}

pub fn gradcheck(config: &RunConfig, seeds: u64, eps: f64, max_per_family: usize, corrupt: Option<f64>) -> anyhow::Result<Outcome> {
    let mut worst = 0.0f64;
    for seed in 0..seeds {
        let (records, trusts) = synth::toy(seed);
        let dataset = build_dataset(records, &trusts)?;
        let graph_config = GraphConfig {
            span: SpanParams::from_days(dataset.min_timestamp().unwrap_or(0), 10.0)?,
            flags: config.flags,
            item_item_cap: config.item_item_cap,
            item_item_seed: seed,
        };
        let graph = hetrec::graph::build_graph(&dataset, &dataset.ratings, &graph_config)?;
        let mean = global_mean(&dataset.ratings)?;
        let model = Model::init(config.model_config(), &graph, mean, seed)?;
        let batch = examples(&graph, &dataset.ratings);

        let mut masks = vec![None];
        if config.dropout > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pass = evaluate_batch(&model, &graph, &batch, DropoutMode::Sample { rate: config.dropout, rng: &mut rng }, false);
            masks.push(pass.mask);
        }
        for mask in masks {
            let dropout_mask = mask.is_some();
            let options = GradCheckOptions { eps, max_per_family, seed, mask, corrupt };
            let report = check_gradients(&model, &graph, &batch, &options);
            for (name, fam) in &report.families {
                eprintln!(
                    "seed {seed}{} {name:<16} max rel err {:.3e} ({} checked, {} skipped at kinks)",
                    if dropout_mask { " masked" } else { "" },
                    fam.max_relative_error,
                    fam.checked,
                    fam.skipped_kinks
                );
            }
            worst = worst.max(report.overall);
            println!("{}", serde_json::to_string(&GradcheckLine { seed, dropout_mask, report: &report })?);
        }
    }
    let passed = worst < GRADIENT_TOLERANCE;
    eprintln!("overall max relative error {worst:.3e}: {}", if passed { "ok" } else { "FAILED" });
    Ok(if passed { Outcome::Success } else { Outcome::Failed })
}

pub fn synth(out: &Path, users: usize, seed: u64, figure2: bool) -> anyhow::Result<Outcome> {
    let (ratings, trusts) = if figure2 {
        synth::figure2()
    } else {
        let items = (users * 3 / 4).max(10);
        synth::generate(&synth::SyntheticSpec { users, items, seed, ..Default::default() })
    };
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut r = create(&out.join("ratings.csv"))?;
    write_ratings(&mut r, &ratings)?;
    r.flush()?;
    let mut t = create(&out.join("trust.csv"))?;
    write_trust(&mut t, &trusts)?;
    t.flush()?;
    println!("wrote {} ratings and {} trust links to {}", ratings.len(), trusts.len(), out.display());
    Ok(Outcome::Success)
}

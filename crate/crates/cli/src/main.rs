mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use hetrec::RunConfig;

#[derive(Parser, Debug)]
#[command(name = "hetrec", version, about = "Time-span graph attention recommender")]
struct Cli {
    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override one configuration key, e.g. `--set epochs=5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print dataset counts as JSON.
    Stats,
    /// Build the training graph, write its export and audit.
    BuildGraph,
    /// Train one model per configured seed.
    Train,
    /// Score a checkpoint, or the global-mean baseline, on one split.
    Evaluate(EvaluateArgs),
    /// Run the full model and every single-component ablation.
    Ablate,
    /// Sweep one setting across values and seeds.
    Sweep(SweepArgs),
    /// Compare analytic and finite-difference gradients on a toy graph.
    Gradcheck(GradcheckArgs),
    /// Write a synthetic ratings/trust pair.
    Synth(SynthArgs),
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[arg(long, required_unless_present = "baseline")]
    checkpoint: Option<PathBuf>,
    /// Report the training-mean baseline instead of a model.
    #[arg(long, conflicts_with = "checkpoint")]
    baseline: bool,
    #[arg(long, default_value = "test", value_parser = ["train", "val", "test"])]
    split: String,
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// embed_dim, dropout, span_days or ablation.
    #[arg(long)]
    axis: String,
    /// Comma-separated values; defaults depend on the axis.
    #[arg(long, value_delimiter = ',')]
    values: Vec<String>,
}

#[derive(Args, Debug)]
struct GradcheckArgs {
    /// Number of toy graphs, seeded 0..n.
    #[arg(long, default_value_t = 5)]
    seeds: u64,
    #[arg(long, default_value_t = 1e-5)]
    eps: f64,
    #[arg(long, default_value_t = 64)]
    max_per_family: usize,
    /// Scale the analytic gradient by this factor before comparing.
    #[arg(long, hide = true)]
    corrupt_gradient: Option<f64>,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Output directory for ratings.csv and trust.csv.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 400)]
    users: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the two-user, four-item example instead.
    #[arg(long)]
    figure2: bool,
}

fn load_config(cli: &Cli) -> anyhow::Result<RunConfig> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    for o in &cli.overrides {
        let (key, value) = o
            .split_once('=')
            .ok_or_else(|| hetrec::Error::Config(format!("override {o:?} is not KEY=VALUE")))?;
        config.set(key, value)?;
    }
    config.validate()?;
    Ok(config)
}

fn run(cli: Cli) -> anyhow::Result<commands::Outcome> {
    let config = load_config(&cli)?;
    match cli.command {
        Command::Stats => commands::stats(&config),
        Command::BuildGraph => commands::build_graph(&config),
        Command::Train => commands::train(&config),
        Command::Evaluate(a) => commands::evaluate(&config, a.checkpoint.as_deref(), a.baseline, &a.split),
        Command::Ablate => commands::ablate(&config),
        Command::Sweep(a) => {
            let axis = a.axis.parse().context("--axis")?;
            commands::sweep(&config, axis, a.values)
        }
        Command::Gradcheck(a) => commands::gradcheck(&config, a.seeds, a.eps, a.max_per_family, a.corrupt_gradient),
        Command::Synth(a) => commands::synth(&a.out, a.users, a.seed, a.figure2),
    }
}

/// 2 for I/O and parse problems, 1 for everything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<hetrec::Error>() {
            return if e.is_io_or_parse() { 2 } else { 1 };
        }
        if cause.is::<std::io::Error>() || cause.is::<serde_json::Error>() {
            return 2;
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(commands::Outcome::Success) => ExitCode::SUCCESS,
        Ok(commands::Outcome::Failed) => ExitCode::from(1),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

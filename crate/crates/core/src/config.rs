//! Run configuration in a flat `key = value` text format.
//!
//! Lines starting with `#` are comments. Lists are comma separated.
//! [`RunConfig::to_text`] writes every key with defaults resolved, and
//! parsing that text yields an equal configuration.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::dataset::{Dataset, SplitSpec};
use crate::error::{Error, Result};
use crate::graph::{AblationFlags, GraphConfig, SpanParams};
use crate::model::ModelConfig;
use crate::training::TrainConfig;

/// Where the observation interval starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OriginPolicy {
    /// Earliest rating timestamp in the dataset.
    MinTimestamp,
    /// Unix epoch, 1970-01-01T00:00:00Z.
    Epoch,
    Explicit(i64),
}

impl fmt::Display for OriginPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OriginPolicy::MinTimestamp => write!(f, "min"),
            OriginPolicy::Epoch => write!(f, "epoch"),
            OriginPolicy::Explicit(t) => write!(f, "{t}"),
        }
    }
}

impl FromStr for OriginPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "min" => Ok(OriginPolicy::MinTimestamp),
            "epoch" => Ok(OriginPolicy::Epoch),
            other => other
                .parse()
                .map(OriginPolicy::Explicit)
                .map_err(|_| Error::Config(format!("origin must be min, epoch or an integer, got {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub ratings: PathBuf,
    pub trust: PathBuf,
    pub train_fraction: f64,
    pub val_fraction: f64,
    pub test_fraction: f64,
    pub split_seed: u64,
    pub span_days: f64,
    pub origin: OriginPolicy,
    pub embed_dim: usize,
    pub edge_dim: usize,
    pub dropout: f64,
    pub leaky_slope: f64,
    pub item_item_cap: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub flags: AblationFlags,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            ratings: PathBuf::from("ratings.csv"),
            trust: PathBuf::from("trust.csv"),
            train_fraction: 0.8,
            val_fraction: 0.1,
            test_fraction: 0.1,
            split_seed: 0,
            span_days: 30.0,
            origin: OriginPolicy::MinTimestamp,
            embed_dim: 64,
            edge_dim: 8,
            dropout: 0.6,
            leaky_slope: 0.2,
            item_item_cap: 10,
            epochs: 15,
            learning_rate: 1e-3,
            batch_size: 256,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            flags: AblationFlags::default(),
            seeds: vec![0],
            out_dir: PathBuf::from("out"),
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value {value:?} for {key}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("invalid boolean {value:?} for {key}"))),
    }
}

/// Keys that do not change what a run computes.
const UNDIGESTED: [&str; 4] = ["ratings", "trust", "seeds", "out_dir"];

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "ratings" => self.ratings = PathBuf::from(v),
            "trust" => self.trust = PathBuf::from(v),
            "train_fraction" => self.train_fraction = parse_value(key, v)?,
            "val_fraction" => self.val_fraction = parse_value(key, v)?,
            "test_fraction" => self.test_fraction = parse_value(key, v)?,
            "split_seed" => self.split_seed = parse_value(key, v)?,
            "span_days" => self.span_days = parse_value(key, v)?,
            "origin" => self.origin = v.parse()?,
            "embed_dim" => self.embed_dim = parse_value(key, v)?,
            "edge_dim" => self.edge_dim = parse_value(key, v)?,
            "dropout" => self.dropout = parse_value(key, v)?,
            "leaky_slope" => self.leaky_slope = parse_value(key, v)?,
            "item_item_cap" => self.item_item_cap = parse_value(key, v)?,
            "epochs" => self.epochs = parse_value(key, v)?,
            "learning_rate" => self.learning_rate = parse_value(key, v)?,
            "batch_size" => self.batch_size = parse_value(key, v)?,
            "adam_beta1" => self.adam_beta1 = parse_value(key, v)?,
            "adam_beta2" => self.adam_beta2 = parse_value(key, v)?,
            "adam_eps" => self.adam_eps = parse_value(key, v)?,
            "use_edge_weights" => self.flags.use_edge_weights = parse_bool(key, v)?,
            "use_span_nodes" => self.flags.use_span_nodes = parse_bool(key, v)?,
            "use_item_item" => self.flags.use_item_item = parse_bool(key, v)?,
            "use_user_user" => self.flags.use_user_user = parse_bool(key, v)?,
            "seeds" => {
                self.seeds = v
                    .split(',')
                    .map(|s| parse_value(key, s.trim()))
                    .collect::<Result<Vec<u64>>>()?
            }
            "out_dir" => self.out_dir = PathBuf::from(v),
            other => return Err(Error::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines on top of the current values.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            self.set(key, value)
                .map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut c = Self::default();
        c.apply_text(text)?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_text(&text)
    }

    fn entries(&self) -> Vec<(&'static str, String)> {
        let f = &self.flags;
        let seeds: Vec<String> = self.seeds.iter().map(u64::to_string).collect();
        vec![
            ("ratings", self.ratings.display().to_string()),
            ("trust", self.trust.display().to_string()),
            ("train_fraction", self.train_fraction.to_string()),
            ("val_fraction", self.val_fraction.to_string()),
            ("test_fraction", self.test_fraction.to_string()),
            ("split_seed", self.split_seed.to_string()),
            ("span_days", self.span_days.to_string()),
            ("origin", self.origin.to_string()),
            ("embed_dim", self.embed_dim.to_string()),
            ("edge_dim", self.edge_dim.to_string()),
            ("dropout", self.dropout.to_string()),
            ("leaky_slope", self.leaky_slope.to_string()),
            ("item_item_cap", self.item_item_cap.to_string()),
            ("epochs", self.epochs.to_string()),
            ("learning_rate", self.learning_rate.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("adam_beta1", self.adam_beta1.to_string()),
            ("adam_beta2", self.adam_beta2.to_string()),
            ("adam_eps", self.adam_eps.to_string()),
            ("use_edge_weights", f.use_edge_weights.to_string()),
            ("use_span_nodes", f.use_span_nodes.to_string()),
            ("use_item_item", f.use_item_item.to_string()),
            ("use_user_user", f.use_user_user.to_string()),
            ("seeds", seeds.join(",")),
            ("out_dir", self.out_dir.display().to_string()),
        ]
    }

    pub fn to_text(&self) -> String {
        self.entries()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    /// SHA-256 over every setting that affects results (paths, seeds and
    /// the output directory excluded).
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for (k, v) in self.entries() {
            if !UNDIGESTED.contains(&k) {
                h.update(format!("{k}={v}\n").as_bytes());
            }
        }
        hex::encode(&h.finalize()[..12])
    }

    pub fn validate(&self) -> Result<()> {
        self.split_spec().validate()?;
        SpanParams::from_days(0, self.span_days)?;
        self.model_config().validate()?;
        self.train_config(0).validate()?;
        if self.seeds.is_empty() {
            return Err(Error::Invalid("at least one seed is required".into()));
        }
        Ok(())
    }

    pub fn check_inputs_exist(&self) -> Result<()> {
        for path in [&self.ratings, &self.trust] {
            if !path.is_file() {
                return Err(Error::Io {
                    path: path.clone(),
                    source: std::io::Error::new(std::io::ErrorKind::NotFound, "file not found"),
                });
            }
        }
        Ok(())
    }

    pub fn split_spec(&self) -> SplitSpec {
        SplitSpec {
            train_fraction: self.train_fraction,
            val_fraction: self.val_fraction,
            test_fraction: self.test_fraction,
            seed: self.split_seed,
        }
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            embed_dim: self.embed_dim,
            edge_dim: self.edge_dim,
            leaky_slope: self.leaky_slope,
            dropout_rate: self.dropout,
            heads: 1,
        }
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            adam_beta1: self.adam_beta1,
            adam_beta2: self.adam_beta2,
            adam_eps: self.adam_eps,
            batch_size: self.batch_size,
            dropout_rate: self.dropout,
            seed,
        }
    }

    pub fn resolve_origin(&self, dataset: &Dataset) -> i64 {
        match self.origin {
            OriginPolicy::MinTimestamp => dataset.min_timestamp().unwrap_or(0),
            OriginPolicy::Epoch => 0,
            OriginPolicy::Explicit(t) => t,
        }
    }

    pub fn graph_config(&self, dataset: &Dataset) -> Result<GraphConfig> {
        Ok(GraphConfig {
            span: SpanParams::from_days(self.resolve_origin(dataset), self.span_days)?,
            flags: self.flags,
            item_item_cap: self.item_item_cap,
            item_item_seed: self.split_seed,
        })
    }
}

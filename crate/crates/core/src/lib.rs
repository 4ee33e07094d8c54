//! Social recommender over a heterogeneous graph of users, items and
//! per-user time-span nodes.
//!
//! Pipeline: [`dataset`] parses and splits ratings, [`graph`] builds the
//! weighted graph from the training split, [`model`] holds the attention
//! layer and rating heads, [`training`] fits it with Adam, and [`eval`]
//! scores runs and sweeps.

pub mod config;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod graph;
pub mod model;
pub mod synth;
pub mod training;

pub use config::{OriginPolicy, RunConfig};
pub use error::{Error, Result};

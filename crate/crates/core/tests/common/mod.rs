#![allow(dead_code)]

pub mod oracles;

use hetrec::dataset::{build_dataset, Dataset, Rating};
use hetrec::graph::{build_graph, AblationFlags, GraphConfig, HeteroGraph, SpanParams, SECONDS_PER_DAY};
use hetrec::model::{Model, ModelConfig};
use hetrec::synth;
use hetrec::training::{examples, Example};

pub struct Toy {
    pub dataset: Dataset,
    pub graph: HeteroGraph,
    pub model: Model,
    pub batch: Vec<Example>,
}

pub fn toy_dataset(seed: u64) -> Dataset {
    let (r, t) = synth::toy(seed);
    build_dataset(r, &t).unwrap()
}

pub fn graph_for(dataset: &Dataset, train: &[Rating], span_days: f64, flags: AblationFlags) -> HeteroGraph {
    let origin = dataset.min_timestamp().unwrap();
    let config = GraphConfig {
        span: SpanParams::from_days(origin, span_days).unwrap(),
        flags,
        item_item_cap: 10,
        item_item_seed: 0,
    };
    build_graph(dataset, train, &config).unwrap()
}

/// Toy graph with 10-day spans, every rating in training.
pub fn toy(seed: u64, config: ModelConfig, flags: AblationFlags) -> Toy {
    let dataset = toy_dataset(seed);
    let graph = graph_for(&dataset, &dataset.ratings, 10.0, flags);
    let mean = dataset.ratings.iter().map(|r| r.rating).sum::<f64>() / dataset.ratings.len() as f64;
    let mut model = Model::init(config, &graph, mean, seed).unwrap();
    // move heads off their initial values so every path carries gradient
    model.params.alpha.data[0] = 0.8;
    model.params.beta.data[0] = 1.3;
    let batch = examples(&graph, &dataset.ratings);
    Toy { dataset, graph, model, batch }
}

pub const DAY: i64 = SECONDS_PER_DAY;

use std::collections::BTreeSet;

use hetrec::graph::{EdgeType, NodeRef};

/// Raw item ids adjacent to a node through edges of `kind`.
pub fn item_neighbours(dataset: &Dataset, graph: &HeteroGraph, node: usize, kind: EdgeType) -> BTreeSet<u64> {
    graph
        .neighbors(node)
        .iter()
        .filter(|e| e.kind == kind)
        .filter_map(|e| match graph.node_ref(e.target) {
            NodeRef::Item(i) => Some(dataset.item_index.raw_of(i)),
            _ => None,
        })
        .collect()
}

/// Raw item ids of span `ordinal` of the user with raw id `user`.
pub fn span_items(dataset: &Dataset, graph: &HeteroGraph, user: u64, ordinal: u64) -> Option<BTreeSet<u64>> {
    let u = dataset.user_index.index_of(user)?;
    let id = graph.node_id(NodeRef::Span { user: u, ordinal })?;
    Some(item_neighbours(dataset, graph, id, EdgeType::ItemSpan))
}

pub fn user_items(dataset: &Dataset, graph: &HeteroGraph, user: u64) -> BTreeSet<u64> {
    let u = dataset.user_index.index_of(user).unwrap();
    item_neighbours(dataset, graph, graph.user_node(u), EdgeType::UserItem)
}

pub fn set(items: &[u64]) -> BTreeSet<u64> {
    items.iter().copied().collect()
}

/// The two-user, four-item scenario with one-week spans from origin 0.
pub fn figure2(flags: AblationFlags) -> (Dataset, HeteroGraph) {
    let (r, t) = synth::figure2();
    let dataset = build_dataset(r, &t).unwrap();
    let config = GraphConfig {
        span: SpanParams::new(0, synth::FIGURE2_WEEK).unwrap(),
        flags,
        item_item_cap: 10,
        item_item_seed: 0,
    };
    let graph = build_graph(&dataset, &dataset.ratings, &config).unwrap();
    (dataset, graph)
}

//! JSON export and structural audit of a built graph.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use super::{span_index, EdgeType, HeteroGraph, NodeRef};
use crate::dataset::{Dataset, Rating};

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum NodeExport {
    User { id: usize, index: usize, raw_id: u64 },
    Item { id: usize, index: usize, raw_id: u64 },
    Span { id: usize, user: usize, ordinal: u64 },
}

#[derive(Debug, Clone, Serialize)]
pub struct GraphExport {
    pub nodes: Vec<NodeExport>,
    /// `(node_a, node_b, type, weight)` with `node_a < node_b`, sorted.
    pub edges: Vec<(usize, usize, EdgeType, f64)>,
}

pub fn export(graph: &HeteroGraph, dataset: &Dataset) -> GraphExport {
    let nodes = (0..graph.num_nodes())
        .map(|id| match graph.node_ref(id) {
            NodeRef::User(index) => NodeExport::User {
                id,
                index,
                raw_id: dataset.user_index.raw_of(index),
            },
            NodeRef::Item(index) => NodeExport::Item {
                id,
                index,
                raw_id: dataset.item_index.raw_of(index),
            },
            NodeRef::Span { user, ordinal } => NodeExport::Span { id, user, ordinal },
        })
        .collect();
    let mut edges = Vec::new();
    for a in 0..graph.num_nodes() {
        for e in graph.neighbors(a) {
            if a < e.target {
                edges.push((a, e.target, e.kind, e.weight));
            }
        }
    }
    GraphExport { nodes, edges }
}

#[derive(Debug, Clone, Serialize)]
pub struct WeightRange {
    pub count: usize,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GraphAudit {
    pub users: usize,
    pub items: usize,
    pub spans: usize,
    pub weights: BTreeMap<String, WeightRange>,
    pub weights_in_range: bool,
    pub unit_weights: bool,
    pub symmetric: bool,
    pub span_containment: bool,
    pub passed: bool,
}

/// Checks weight ranges, adjacency symmetry, and that every span node is
/// adjacent to exactly the items its owner rated inside that span.
pub fn audit(graph: &HeteroGraph, train: &[Rating]) -> GraphAudit {
    let mut weights: BTreeMap<String, WeightRange> = BTreeMap::new();
    let mut weights_in_range = true;
    let mut unit_weights = true;
    let mut symmetric = true;
    for a in 0..graph.num_nodes() {
        for e in graph.neighbors(a) {
            let range = weights.entry(format!("{:?}", e.kind)).or_insert(WeightRange {
                count: 0,
                min: f64::INFINITY,
                max: f64::NEG_INFINITY,
            });
            range.count += 1;
            range.min = range.min.min(e.weight);
            range.max = range.max.max(e.weight);
            match e.kind {
                EdgeType::UserUser | EdgeType::ItemItem => unit_weights &= e.weight == 1.0,
                EdgeType::UserItem | EdgeType::ItemSpan => {
                    weights_in_range &= (0.0..=1.0).contains(&e.weight)
                }
            }
            let back = graph
                .neighbors(e.target)
                .iter()
                .any(|r| r.target == a && r.kind == e.kind && r.weight == e.weight);
            symmetric &= back;
        }
    }
    for range in weights.values_mut() {
        range.count /= 2;
    }

    let mut span_containment = true;
    if graph.config().flags.use_span_nodes {
        let mut expected: BTreeMap<(usize, u64), BTreeSet<usize>> = BTreeMap::new();
        for r in train {
            match span_index(r.timestamp, &graph.config().span) {
                Ok(j) => {
                    expected.entry((r.user, j)).or_default().insert(r.item);
                }
                Err(_) => span_containment = false,
            }
        }
        span_containment &= expected.len() == graph.num_spans();
        for ((user, ordinal), items) in &expected {
            let Some(id) = graph.node_id(NodeRef::Span { user: *user, ordinal: *ordinal }) else {
                span_containment = false;
                continue;
            };
            let adjacent: BTreeSet<usize> = graph
                .neighbors(id)
                .iter()
                .map(|e| match graph.node_ref(e.target) {
                    NodeRef::Item(i) if e.kind == EdgeType::ItemSpan => i,
                    _ => usize::MAX,
                })
                .collect();
            let user_items: BTreeSet<usize> = graph
                .neighbors(*user)
                .iter()
                .filter(|e| e.kind == EdgeType::UserItem)
                .map(|e| e.target - graph.num_users())
                .collect();
            span_containment &= &adjacent == items && adjacent.is_subset(&user_items);
        }
    } else {
        span_containment = graph.num_spans() == 0;
    }

    GraphAudit {
        users: graph.num_users(),
        items: graph.num_items(),
        spans: graph.num_spans(),
        weights,
        weights_in_range,
        unit_weights,
        symmetric,
        span_containment,
        passed: weights_in_range && unit_weights && symmetric && span_containment,
    }
}

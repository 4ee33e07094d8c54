//! Heterogeneous user / item / time-span graph.
//!
//! Node ids are contiguous: users first, then items, then span nodes ordered
//! by `(owner, ordinal)`. Adjacency is stored in compressed rows and is
//! symmetric.

pub mod export;
pub mod weights;

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Rating};
use crate::error::{Error, Result};

pub use weights::{
    aggregate_span_item_weights, aggregate_user_item_weights, normalize_weights, raw_edge_weight,
    span_index, SpanParams, SECONDS_PER_DAY,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NodeKind {
    User,
    Item,
    Span,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NodeRef {
    User(usize),
    Item(usize),
    Span { user: usize, ordinal: u64 },
}

impl NodeRef {
    pub fn kind(&self) -> NodeKind {
        match self {
            NodeRef::User(_) => NodeKind::User,
            NodeRef::Item(_) => NodeKind::Item,
            NodeRef::Span { .. } => NodeKind::Span,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EdgeType {
    UserUser,
    ItemItem,
    UserItem,
    ItemSpan,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub target: usize,
    pub kind: EdgeType,
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AblationFlags {
    pub use_edge_weights: bool,
    pub use_span_nodes: bool,
    pub use_item_item: bool,
    pub use_user_user: bool,
}

impl Default for AblationFlags {
    fn default() -> Self {
        Self {
            use_edge_weights: true,
            use_span_nodes: true,
            use_item_item: true,
            use_user_user: true,
        }
    }
}

impl AblationFlags {
    /// The full model followed by the four single-component removals.
    pub fn named_variants() -> [(&'static str, AblationFlags); 5] {
        let full = AblationFlags::default();
        [
            ("full", full),
            ("no_edge_weights", AblationFlags { use_edge_weights: false, ..full }),
            ("no_span_nodes", AblationFlags { use_span_nodes: false, ..full }),
            ("no_item_item", AblationFlags { use_item_item: false, ..full }),
            ("no_user_user", AblationFlags { use_user_user: false, ..full }),
        ]
    }

    pub fn by_name(name: &str) -> Option<AblationFlags> {
        Self::named_variants()
            .into_iter()
            .find(|(n, _)| *n == name)
            .map(|(_, f)| f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphConfig {
    pub span: SpanParams,
    pub flags: AblationFlags,
    /// Maximum number of same-category neighbours per item.
    pub item_item_cap: usize,
    pub item_item_seed: u64,
}

#[derive(Debug, Clone)]
pub struct HeteroGraph {
    num_users: usize,
    num_items: usize,
    spans: Vec<(usize, u64)>,
    offsets: Vec<usize>,
    edges: Vec<Edge>,
    span_catalog: Vec<Vec<(u64, usize)>>,
    user_seen: Vec<bool>,
    item_seen: Vec<bool>,
    config: GraphConfig,
}

impl HeteroGraph {
    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn num_spans(&self) -> usize {
        self.spans.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.num_users + self.num_items + self.spans.len()
    }

    pub fn num_directed_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn config(&self) -> &GraphConfig {
        &self.config
    }

    pub fn user_node(&self, user: usize) -> usize {
        debug_assert!(user < self.num_users);
        user
    }

    pub fn item_node(&self, item: usize) -> usize {
        debug_assert!(item < self.num_items);
        self.num_users + item
    }

    pub fn node_id(&self, node: NodeRef) -> Option<usize> {
        match node {
            NodeRef::User(u) => (u < self.num_users).then_some(u),
            NodeRef::Item(i) => (i < self.num_items).then(|| self.num_users + i),
            NodeRef::Span { user, ordinal } => self
                .span_catalog
                .get(user)?
                .binary_search_by_key(&ordinal, |&(o, _)| o)
                .ok()
                .map(|k| self.span_catalog[user][k].1),
        }
    }

    pub fn node_ref(&self, id: usize) -> NodeRef {
        if id < self.num_users {
            NodeRef::User(id)
        } else if id < self.num_users + self.num_items {
            NodeRef::Item(id - self.num_users)
        } else {
            let (user, ordinal) = self.spans[id - self.num_users - self.num_items];
            NodeRef::Span { user, ordinal }
        }
    }

    pub fn kind(&self, id: usize) -> NodeKind {
        self.node_ref(id).kind()
    }

    pub fn neighbors(&self, id: usize) -> &[Edge] {
        &self.edges[self.offsets[id]..self.offsets[id + 1]]
    }

    /// Existing span ordinals of a user with their node ids, ascending.
    pub fn spans_of(&self, user: usize) -> &[(u64, usize)] {
        &self.span_catalog[user]
    }

    /// Span node used to answer a query at `ts`: the span containing `ts`,
    /// else the latest earlier span of the user.
    pub fn span_for_query(&self, user: usize, ts: i64) -> Option<usize> {
        let catalog = self.span_catalog.get(user)?;
        let ordinal = span_index(ts, &self.config.span).ok()?;
        let upto = catalog.partition_point(|&(o, _)| o <= ordinal);
        upto.checked_sub(1).map(|k| catalog[k].1)
    }

    /// Whether the user has at least one training interaction.
    pub fn user_seen(&self, user: usize) -> bool {
        self.user_seen.get(user).copied().unwrap_or(false)
    }

    pub fn item_seen(&self, item: usize) -> bool {
        self.item_seen.get(item).copied().unwrap_or(false)
    }

    pub fn edge_count(&self, kind: EdgeType) -> usize {
        self.edges.iter().filter(|e| e.kind == kind).count() / 2
    }
}

/// Undirected same-category item pairs with per-item degree at most `cap`.
/// Each category is shuffled and connected as a circulant graph, which
/// falls back to a full clique when the category is small enough.
fn item_item_pairs(category_of: &[usize], cap: usize, seed: u64) -> Vec<(usize, usize)> {
    let mut by_category: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (item, &c) in category_of.iter().enumerate() {
        by_category.entry(c).or_default().push(item);
    }
    let mut pairs = Vec::new();
    for (c, mut members) in by_category {
        let n = members.len();
        if n < 2 || cap == 0 {
            continue;
        }
        if n - 1 <= cap {
            for a in 0..n {
                for b in a + 1..n {
                    pairs.push((members[a], members[b]));
                }
            }
            continue;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (c as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        members.shuffle(&mut rng);
        for k in 0..n {
            for offset in 1..=cap / 2 {
                let a = members[k];
                let b = members[(k + offset) % n];
                pairs.push((a.min(b), a.max(b)));
            }
        }
    }
    pairs.sort_unstable();
    pairs.dedup();
    pairs
}

/// Builds the graph from training interactions only. Users and items that
/// appear only outside the training split are still nodes, without
/// interaction edges.
pub fn build_graph(dataset: &Dataset, train: &[Rating], config: &GraphConfig) -> Result<HeteroGraph> {
    if train.is_empty() {
        return Err(Error::Invalid("training split is empty".into()));
    }
    let span = &config.span;
    let min_ts = train.iter().map(|r| r.timestamp).min().unwrap_or(span.origin);
    if span.origin > min_ts {
        return Err(Error::BeforeOrigin {
            ts: min_ts,
            origin: span.origin,
        });
    }
    let num_users = dataset.num_users();
    let num_items = dataset.num_items();
    let flags = config.flags;

    let mut by_user: Vec<Vec<Rating>> = vec![Vec::new(); num_users];
    for r in train {
        if r.user >= num_users || r.item >= num_items {
            return Err(Error::Invalid(format!(
                "rating {} references an unindexed user or item",
                r.id
            )));
        }
        by_user[r.user].push(*r);
    }

    let mut user_item: Vec<(usize, usize, u64)> = Vec::new();
    let mut span_item: Vec<(usize, u64, usize, u64)> = Vec::new();
    for (user, ratings) in by_user.iter().enumerate() {
        if ratings.is_empty() {
            continue;
        }
        for (item, w) in aggregate_user_item_weights(ratings, &dataset.category_of, span)? {
            user_item.push((user, item, w));
        }
        if flags.use_span_nodes {
            for ((ordinal, item), w) in aggregate_span_item_weights(ratings, &dataset.category_of, span)? {
                span_item.push((user, ordinal, item, w));
            }
        }
    }

    let family_weights = |raw: Vec<f64>| {
        if flags.use_edge_weights {
            normalize_weights(&raw)
        } else {
            vec![1.0; raw.len()]
        }
    };
    let ui_weights = family_weights(user_item.iter().map(|e| e.2 as f64).collect());
    let is_weights = family_weights(span_item.iter().map(|e| e.3 as f64).collect());

    // span nodes in (owner, ordinal) order
    let mut spans: Vec<(usize, u64)> = span_item.iter().map(|e| (e.0, e.1)).collect();
    spans.sort_unstable();
    spans.dedup();
    let span_base = num_users + num_items;
    let mut span_catalog: Vec<Vec<(u64, usize)>> = vec![Vec::new(); num_users];
    for (k, &(user, ordinal)) in spans.iter().enumerate() {
        span_catalog[user].push((ordinal, span_base + k));
    }

    let num_nodes = span_base + spans.len();
    let mut adjacency: Vec<Vec<Edge>> = vec![Vec::new(); num_nodes];
    let mut connect = |a: usize, b: usize, kind: EdgeType, weight: f64| {
        adjacency[a].push(Edge { target: b, kind, weight });
        adjacency[b].push(Edge { target: a, kind, weight });
    };

    if flags.use_user_user {
        let mut pairs: Vec<(usize, usize)> = dataset
            .trusts
            .iter()
            .map(|&(a, b)| (a.min(b), a.max(b)))
            .collect();
        pairs.sort_unstable();
        pairs.dedup();
        for (a, b) in pairs {
            connect(a, b, EdgeType::UserUser, 1.0);
        }
    }
    if flags.use_item_item {
        for (a, b) in item_item_pairs(&dataset.category_of, config.item_item_cap, config.item_item_seed) {
            connect(num_users + a, num_users + b, EdgeType::ItemItem, 1.0);
        }
    }
    let mut user_seen = vec![false; num_users];
    let mut item_seen = vec![false; num_items];
    for (&(user, item, _), &w) in user_item.iter().zip(&ui_weights) {
        user_seen[user] = true;
        item_seen[item] = true;
        connect(user, num_users + item, EdgeType::UserItem, w);
    }
    for (&(user, ordinal, item, _), &w) in span_item.iter().zip(&is_weights) {
        let k = spans.binary_search(&(user, ordinal)).expect("span registered");
        connect(num_users + item, span_base + k, EdgeType::ItemSpan, w);
    }

    let mut offsets = Vec::with_capacity(num_nodes + 1);
    let mut edges = Vec::new();
    offsets.push(0);
    for mut list in adjacency {
        list.sort_by(|x, y| (x.target, x.kind).cmp(&(y.target, y.kind)));
        edges.extend(list);
        offsets.push(edges.len());
    }

    Ok(HeteroGraph {
        num_users,
        num_items,
        spans,
        offsets,
        edges,
        span_catalog,
        user_seen,
        item_seen,
        config: *config,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{build_dataset, RatingRecord, TrustRecord};

    #[test]
    fn item_item_degree_capped_and_symmetric() {
        let cats: Vec<usize> = (0..200).map(|i| i % 3).collect();
        let pairs = item_item_pairs(&cats, 10, 5);
        let mut degree = vec![0usize; 200];
        for &(a, b) in &pairs {
            assert_ne!(a, b);
            assert_eq!(cats[a], cats[b]);
            degree[a] += 1;
            degree[b] += 1;
        }
        assert!(degree.iter().all(|&d| d == 10));
        assert_eq!(pairs, item_item_pairs(&cats, 10, 5));
    }

    #[test]
    fn small_category_is_clique() {
        let cats = vec![0, 0, 0, 1];
        assert_eq!(item_item_pairs(&cats, 10, 0), vec![(0, 1), (0, 2), (1, 2)]);
    }

    fn tiny() -> Dataset {
        let recs = vec![
            RatingRecord { user_id: 1, item_id: 10, category_id: 0, rating: 4.0, timestamp: 100 },
            RatingRecord { user_id: 2, item_id: 11, category_id: 0, rating: 2.0, timestamp: 200 },
        ];
        build_dataset(recs, &[TrustRecord { truster: 1, trustee: 2 }]).unwrap()
    }

    fn config(flags: AblationFlags) -> GraphConfig {
        GraphConfig {
            span: SpanParams::new(100, 1000).unwrap(),
            flags,
            item_item_cap: 10,
            item_item_seed: 0,
        }
    }

    #[test]
    fn empty_train_rejected() {
        let d = tiny();
        assert!(build_graph(&d, &[], &config(AblationFlags::default())).is_err());
    }

    #[test]
    fn origin_after_data_rejected() {
        let d = tiny();
        let mut c = config(AblationFlags::default());
        c.span.origin = 150;
        assert!(matches!(build_graph(&d, &d.ratings, &c), Err(Error::BeforeOrigin { .. })));
    }

    #[test]
    fn query_span_selection() {
        let d = tiny();
        let g = build_graph(&d, &d.ratings, &config(AblationFlags::default())).unwrap();
        let s = g.node_id(NodeRef::Span { user: 0, ordinal: 0 }).unwrap();
        assert_eq!(g.span_for_query(0, 100), Some(s));
        assert_eq!(g.span_for_query(0, 5_000), Some(s));
        assert_eq!(g.span_for_query(0, 50), None);
        assert!(g.user_seen(0));
        assert_eq!(g.edge_count(EdgeType::UserUser), 1);
        assert_eq!(g.edge_count(EdgeType::ItemItem), 1);
    }
}

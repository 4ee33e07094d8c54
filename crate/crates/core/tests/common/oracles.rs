//! Independent re-implementations used as test oracles.

use std::collections::BTreeMap;

use hetrec::dataset::{build_dataset, Dataset, Rating, RatingRecord, TrustRecord};
use hetrec::graph::weights::{aggregate_span_item_weights, aggregate_user_item_weights};
use hetrec::graph::{build_graph, AblationFlags, GraphConfig, HeteroGraph, NodeRef, SpanParams};
use hetrec::model::{DropoutMode, Forward, Model, ModelConfig};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const SPAN: i64 = 100;

pub struct Instance {
    pub ratings: Vec<Rating>,
    pub category_of: Vec<usize>,
}

/// At most 20 interactions of one user over at most 4 categories and 3
/// spans of length `SPAN` from origin 0. Timestamps sit on a coarse grid so
/// ties are common.
pub fn random_instance(rng: &mut ChaCha8Rng) -> Instance {
    let categories = rng.gen_range(1..=4);
    let items = rng.gen_range(1..=8);
    let spans = rng.gen_range(1..=3);
    let category_of = (0..items).map(|_| rng.gen_range(0..categories)).collect();
    let n = rng.gen_range(1..=20);
    let ratings = (0..n)
        .map(|id| Rating {
            id,
            user: 0,
            item: rng.gen_range(0..items),
            rating: 3.0,
            timestamp: rng.gen_range(0..spans * SPAN / 10) * 10 + rng.gen_range(0..2),
        })
        .collect();
    Instance { ratings, category_of }
}

fn brute_cumulative(inst: &Instance, same_span: bool) -> Vec<u64> {
    let r = &inst.ratings;
    (0..r.len())
        .map(|k| {
            let mut total = 0u64;
            for j in 0..r.len() {
                let same_cat = inst.category_of[r[j].item] == inst.category_of[r[k].item];
                let span_ok = !same_span || r[j].timestamp / SPAN == r[k].timestamp / SPAN;
                if same_cat && span_ok && r[j].timestamp <= r[k].timestamp {
                    total += r[j].timestamp as u64;
                }
            }
            total
        })
        .collect()
}

/// Weight of the latest interaction per key. Equal-timestamp duplicates
/// carry equal weights, so the choice among them does not matter.
fn brute_latest<K: Ord + Copy>(inst: &Instance, w: &[u64], key: impl Fn(&Rating) -> K) -> BTreeMap<K, u64> {
    let mut out = BTreeMap::new();
    for (k, r) in inst.ratings.iter().enumerate() {
        let latest = inst.ratings.iter().filter(|o| key(o) == key(r)).map(|o| o.timestamp).max().unwrap();
        if r.timestamp == latest {
            out.insert(key(r), w[k]);
        }
    }
    out
}

/// Whether both aggregations agree exactly with the double loop.
pub fn aggregation_agrees(inst: &Instance) -> bool {
    let params = SpanParams::new(0, SPAN).unwrap();
    let user_item = aggregate_user_item_weights(&inst.ratings, &inst.category_of, &params).unwrap();
    let span_item = aggregate_span_item_weights(&inst.ratings, &inst.category_of, &params).unwrap();
    user_item == brute_latest(inst, &brute_cumulative(inst, false), |r| r.item)
        && span_item == brute_latest(inst, &brute_cumulative(inst, true), |r| ((r.timestamp / SPAN) as u64, r.item))
}

fn leaky(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        slope * x
    }
}

/// Attention coefficients (self first) and output of node `a`, written out
/// with the explicit concatenation `[W h_a | W h_b | W_e e_ab]` and an
/// unshifted softmax.
pub fn attention(model: &Model, graph: &HeteroGraph, a: usize) -> (Vec<f64>, Vec<f64>) {
    let p = &model.params;
    let d = model.config.embed_dim;
    let slope = model.config.leaky_slope;
    let project = |n: usize| -> Vec<f64> {
        (0..d)
            .map(|k| (0..d).map(|j| p.proj.data[k * d + j] * p.embeddings.data[n * d + j]).sum())
            .collect()
    };
    let mut hood = vec![(a, 1.0)];
    hood.extend(graph.neighbors(a).iter().map(|e| (e.target, e.weight)));

    let za = project(a);
    let mut logits = Vec::new();
    for &(b, w) in &hood {
        let mut concat = za.clone();
        concat.extend(project(b));
        concat.extend(p.edge_proj.data.iter().map(|x| x * w));
        let s: f64 = concat.iter().zip(&p.attn.data).map(|(x, y)| x * y).sum();
        logits.push(leaky(s, slope).exp());
    }
    let total: f64 = logits.iter().sum();
    let alpha: Vec<f64> = logits.iter().map(|l| l / total).collect();
    let mut h = vec![0.0; d];
    for (&(b, _), al) in hood.iter().zip(&alpha) {
        for (hk, zk) in h.iter_mut().zip(project(b)) {
            *hk += al * zk;
        }
    }
    (alpha, h.into_iter().map(|x| leaky(x, slope)).collect())
}

pub fn randomize(model: &mut Model, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for t in model.params.tensors_mut() {
        for v in &mut t.data {
            *v = rng.gen_range(-1.0..1.0);
        }
    }
}

fn relabel_graph(dataset: &Dataset) -> HeteroGraph {
    let config = GraphConfig {
        span: SpanParams::from_days(dataset.min_timestamp().unwrap(), 10.0).unwrap(),
        flags: AblationFlags::default(),
        // large enough that every category is a clique, independent of labels
        item_item_cap: 1000,
        item_item_seed: 0,
    };
    build_graph(dataset, &dataset.ratings, &config).unwrap()
}

/// Node id in `to` of node `id` in `from`, matched through raw ids.
fn translate(id: usize, from: (&Dataset, &HeteroGraph), to: (&Dataset, &HeteroGraph)) -> usize {
    let user = |u: usize| to.0.user_index.index_of(from.0.user_index.raw_of(u)).unwrap();
    let node = match from.1.node_ref(id) {
        NodeRef::User(u) => NodeRef::User(user(u)),
        NodeRef::Item(i) => NodeRef::Item(to.0.item_index.index_of(from.0.item_index.raw_of(i)).unwrap()),
        NodeRef::Span { user: u, ordinal } => NodeRef::Span { user: user(u), ordinal },
    };
    to.1.node_id(node).unwrap()
}

/// Builds the graph twice from the same records in two input orders, so
/// every neighbourhood is stored in a different order, and returns the
/// largest difference in any coefficient or output coordinate.
pub fn relabelling_deviation(records: Vec<RatingRecord>, trusts: &[TrustRecord], seed: u64) -> f64 {
    let a = build_dataset(records.clone(), trusts).unwrap();
    let mut shuffled = records;
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed + 100));
    let b = build_dataset(shuffled, trusts).unwrap();
    let (ga, gb) = (relabel_graph(&a), relabel_graph(&b));
    assert_eq!(ga.num_nodes(), gb.num_nodes());

    let config = ModelConfig { embed_dim: 8, edge_dim: 4, ..Default::default() };
    let mut ma = Model::init(config, &ga, 3.5, seed).unwrap();
    randomize(&mut ma, seed);
    let mut mb = ma.clone();
    let map: Vec<usize> = (0..ga.num_nodes()).map(|n| translate(n, (&a, &ga), (&b, &gb))).collect();
    for (n, &m) in map.iter().enumerate() {
        mb.params.embeddings.row_mut(m).copy_from_slice(ma.params.embeddings.row(n));
    }

    let all: Vec<usize> = (0..ga.num_nodes()).collect();
    let fa = Forward::run(&ma, &ga, &all, DropoutMode::Off);
    let fb = Forward::run(&mb, &gb, &all, DropoutMode::Off);
    let mut worst = 0.0f64;
    for (n, &m) in map.iter().enumerate() {
        for (x, y) in fa.representation(n).unwrap().iter().zip(fb.representation(m).unwrap()) {
            worst = worst.max((x - y).abs());
        }
        let mut ca: Vec<(usize, f64)> = fa.coefficients(n).unwrap().into_iter().map(|(k, x)| (map[k], x)).collect();
        let mut cb = fb.coefficients(m).unwrap();
        ca.sort_by_key(|c| c.0);
        cb.sort_by_key(|c| c.0);
        assert_eq!(ca.len(), cb.len());
        for (x, y) in ca.iter().zip(&cb) {
            assert_eq!(x.0, y.0, "neighbourhoods differ");
            worst = worst.max((x.1 - y.1).abs());
        }
    }
    worst
}

/// Largest `|sum(alpha) - 1|` over every node of a full forward pass.
pub fn normalization_error(forward: &Forward) -> f64 {
    forward
        .centers
        .iter()
        .map(|&n| (forward.coefficients(n).unwrap().iter().map(|c| c.1).sum::<f64>() - 1.0).abs())
        .fold(0.0, f64::max)
}

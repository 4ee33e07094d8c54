//! Time-span indexing and timestamp-derived edge weights.
//!
//! A raw weight is the number of seconds between the observation origin and
//! the interaction. Raw weights of same-category interactions by one user are
//! accumulated: an interaction's weight is the sum of the raw weights of every
//! interaction of that user with an item of the same category whose timestamp
//! is at or before its own. The span variant applies the same rule inside each
//! time span separately. Both families are then min-max normalized.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataset::Rating;
use crate::error::{Error, Result};

pub const SECONDS_PER_DAY: i64 = 86_400;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpanParams {
    /// Start of the observation interval, in seconds.
    pub origin: i64,
    /// Length of one time span, in seconds.
    pub span_length: i64,
}

impl SpanParams {
    pub fn new(origin: i64, span_length: i64) -> Result<Self> {
        if span_length <= 0 {
            return Err(Error::Invalid(format!(
                "span length must be positive, got {span_length}"
            )));
        }
        Ok(Self {
            origin,
            span_length,
        })
    }

    pub fn from_days(origin: i64, days: f64) -> Result<Self> {
        if !(days > 0.0) || !days.is_finite() {
            return Err(Error::Invalid(format!("span_days must be positive, got {days}")));
        }
        Self::new(origin, (days * SECONDS_PER_DAY as f64).round() as i64)
    }
}

/// Ordinal of the half-open span `[T + j*pt, T + (j+1)*pt)` containing `ts`.
pub fn span_index(ts: i64, params: &SpanParams) -> Result<u64> {
    let offset = raw_edge_weight(ts, params)?;
    Ok(offset / params.span_length as u64)
}

pub fn raw_edge_weight(ts: i64, params: &SpanParams) -> Result<u64> {
    if ts < params.origin {
        return Err(Error::BeforeOrigin {
            ts,
            origin: params.origin,
        });
    }
    Ok((ts - params.origin) as u64)
}

/// One interaction of a single user, reduced to what the weighting needs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Interaction {
    pub item: usize,
    pub category: usize,
    pub timestamp: i64,
}

/// Cumulative same-category weight of every interaction, returned in input
/// order. Interactions sharing a timestamp include each other.
pub fn cumulative_weights(interactions: &[Interaction], params: &SpanParams) -> Result<Vec<u64>> {
    let raw = interactions
        .iter()
        .map(|x| raw_edge_weight(x.timestamp, params))
        .collect::<Result<Vec<_>>>()?;

    let mut order: Vec<usize> = (0..interactions.len()).collect();
    order.sort_by_key(|&k| (interactions[k].timestamp, interactions[k].item));

    let mut running: BTreeMap<usize, u64> = BTreeMap::new();
    let mut out = vec![0u64; interactions.len()];
    let mut start = 0;
    while start < order.len() {
        let ts = interactions[order[start]].timestamp;
        let end = order[start..]
            .iter()
            .position(|&k| interactions[k].timestamp != ts)
            .map_or(order.len(), |p| start + p);
        for &k in &order[start..end] {
            *running.entry(interactions[k].category).or_default() += raw[k];
        }
        for &k in &order[start..end] {
            out[k] = running[&interactions[k].category];
        }
        start = end;
    }
    Ok(out)
}

/// Keeps, per key, the weight of the latest interaction (timestamp, then item
/// index) among those sharing the key.
fn latest_per_key<K: Ord + Copy>(
    interactions: &[Interaction],
    weights: &[u64],
    key: impl Fn(&Interaction) -> K,
) -> BTreeMap<K, u64> {
    let mut best: BTreeMap<K, (i64, u64)> = BTreeMap::new();
    for (x, &w) in interactions.iter().zip(weights) {
        let entry = best.entry(key(x)).or_insert((x.timestamp, w));
        if x.timestamp >= entry.0 {
            *entry = (x.timestamp, w);
        }
    }
    best.into_iter().map(|(k, (_, w))| (k, w)).collect()
}

fn to_interactions(ratings: &[Rating], category_of: &[usize]) -> Result<Vec<Interaction>> {
    ratings
        .iter()
        .map(|r| {
            let category = *category_of.get(r.item).ok_or(Error::MissingCategory(r.item))?;
            Ok(Interaction {
                item: r.item,
                category,
                timestamp: r.timestamp,
            })
        })
        .collect()
}

/// User-item weights for one user's training ratings, keyed by item index.
pub fn aggregate_user_item_weights(
    ratings: &[Rating],
    category_of: &[usize],
    params: &SpanParams,
) -> Result<BTreeMap<usize, u64>> {
    let xs = to_interactions(ratings, category_of)?;
    let w = cumulative_weights(&xs, params)?;
    Ok(latest_per_key(&xs, &w, |x| x.item))
}

/// Item-span weights for one user's training ratings, keyed by
/// `(span ordinal, item index)`. Accumulation never crosses spans.
pub fn aggregate_span_item_weights(
    ratings: &[Rating],
    category_of: &[usize],
    params: &SpanParams,
) -> Result<BTreeMap<(u64, usize), u64>> {
    let xs = to_interactions(ratings, category_of)?;
    let mut by_span: BTreeMap<u64, Vec<Interaction>> = BTreeMap::new();
    for x in xs {
        by_span.entry(span_index(x.timestamp, params)?).or_default().push(x);
    }
    let mut out = BTreeMap::new();
    for (ordinal, group) in by_span {
        let w = cumulative_weights(&group, params)?;
        for (item, weight) in latest_per_key(&group, &w, |x| x.item) {
            out.insert((ordinal, item), weight);
        }
    }
    Ok(out)
}

/// Min-max normalization to `[0, 1]`. A degenerate family (all values equal)
/// maps every value to 1.
pub fn normalize_weights(values: &[f64]) -> Vec<f64> {
    let (min, max) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if values.is_empty() || max <= min {
        return vec![1.0; values.len()];
    }
    let range = max - min;
    values.iter().map(|&v| (v - min) / range).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const DAY: i64 = SECONDS_PER_DAY;

    fn params() -> SpanParams {
        SpanParams::new(1_000, 30 * DAY).unwrap()
    }

    fn rating(item: usize, ts: i64) -> Rating {
        Rating {
            id: 0,
            user: 0,
            item,
            rating: 3.0,
            timestamp: ts,
        }
    }

    #[test]
    fn span_index_boundaries() {
        let p = params();
        assert_eq!(span_index(1_000, &p).unwrap(), 0);
        assert_eq!(span_index(1_000 + 45 * DAY, &p).unwrap(), 1);
        assert_eq!(span_index(1_000 + 30 * DAY, &p).unwrap(), 1);
        assert_eq!(span_index(1_000 + 30 * DAY - 1, &p).unwrap(), 0);
        assert!(span_index(999, &p).is_err());
    }

    #[test]
    fn raw_weight() {
        let p = params();
        assert_eq!(raw_edge_weight(1_000, &p).unwrap(), 0);
        assert_eq!(raw_edge_weight(1_100, &p).unwrap(), 100);
        assert!(raw_edge_weight(1_200, &p).unwrap() > raw_edge_weight(1_100, &p).unwrap());
        assert!(raw_edge_weight(0, &p).is_err());
    }

    #[test]
    fn span_params_validation() {
        assert!(SpanParams::new(0, 0).is_err());
        assert!(SpanParams::from_days(0, -1.0).is_err());
        assert_eq!(SpanParams::from_days(0, 30.0).unwrap().span_length, 30 * DAY);
    }

    #[test]
    fn same_category_accumulates() {
        let cats = vec![0, 0];
        let w = aggregate_user_item_weights(&[rating(0, 1_100), rating(1, 1_250)], &cats, &params())
            .unwrap();
        assert_eq!(w[&0], 100);
        assert_eq!(w[&1], 350);
    }

    #[test]
    fn distinct_categories_keep_raw() {
        let cats = vec![0, 1, 2];
        let rs = [rating(0, 1_100), rating(1, 1_250), rating(2, 1_400)];
        let w = aggregate_user_item_weights(&rs, &cats, &params()).unwrap();
        assert_eq!((w[&0], w[&1], w[&2]), (100, 250, 400));
    }

    #[test]
    fn single_interaction() {
        let w = aggregate_user_item_weights(&[rating(0, 1_777)], &[0], &params()).unwrap();
        assert_eq!(w[&0], 777);
    }

    #[test]
    fn missing_category() {
        assert!(matches!(
            aggregate_user_item_weights(&[rating(3, 1_100)], &[0], &params()),
            Err(Error::MissingCategory(3))
        ));
    }

    #[test]
    fn repeated_item_keeps_latest() {
        let cats = vec![0, 0];
        let rs = [rating(0, 1_100), rating(1, 1_200), rating(0, 1_300)];
        let w = aggregate_user_item_weights(&rs, &cats, &params()).unwrap();
        assert_eq!(w[&0], 100 + 200 + 300);
        assert_eq!(w[&1], 300);
    }

    #[test]
    fn equal_timestamps_include_each_other() {
        let cats = vec![0, 0];
        let w = aggregate_user_item_weights(&[rating(1, 1_100), rating(0, 1_100)], &cats, &params())
            .unwrap();
        assert_eq!((w[&0], w[&1]), (200, 200));
    }

    #[test]
    fn span_aggregation_does_not_cross_spans() {
        let cats = vec![0, 0];
        let p = params();
        let rs = [rating(0, 1_100), rating(1, 1_000 + 31 * DAY)];
        let w = aggregate_span_item_weights(&rs, &cats, &p).unwrap();
        assert_eq!(w[&(0, 0)], 100);
        assert_eq!(w[&(1, 1)], (31 * DAY) as u64);

        let rs = [rating(0, 1_100), rating(1, 1_250)];
        let w = aggregate_span_item_weights(&rs, &cats, &p).unwrap();
        assert_eq!(w[&(0, 1)], 350);
        assert_eq!(w.len(), 2);
    }

    #[test]
    fn normalization() {
        assert_eq!(normalize_weights(&[100.0, 350.0]), vec![0.0, 1.0]);
        assert_eq!(normalize_weights(&[100.0, 225.0, 350.0]), vec![0.0, 0.5, 1.0]);
        assert_eq!(normalize_weights(&[42.0]), vec![1.0]);
        assert_eq!(normalize_weights(&[7.0, 7.0]), vec![1.0, 1.0]);
        assert!(normalize_weights(&[]).is_empty());
    }
}

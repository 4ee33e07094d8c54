//! Synthetic rating and trust data with known structure, used for smoke
//! runs, gradient checks, and fixtures.
//!
//! Ratings combine user, item and category offsets with two preference
//! signals: a long-term favourite category that may switch once during the
//! observation window, and a short-term "mood" category that is redrawn every
//! `regime_days`. Users mostly trust members of their own community, which
//! shares a rating offset and a favourite category.

use rand::distributions::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;

use crate::dataset::{RatingRecord, TrustRecord};
use crate::graph::SECONDS_PER_DAY;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub users: usize,
    pub items: usize,
    pub categories: usize,
    pub communities: usize,
    pub min_ratings: usize,
    pub max_ratings: usize,
    pub days: i64,
    pub regime_days: i64,
    pub trust_per_user: usize,
    /// Timestamp of the first interaction.
    pub start: i64,
    pub noise: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            users: 400,
            items: 300,
            categories: 8,
            communities: 6,
            min_ratings: 6,
            max_ratings: 30,
            days: 720,
            regime_days: 30,
            trust_per_user: 3,
            start: 1_262_304_000,
            noise: 0.5,
            seed: 0,
        }
    }
}

pub fn generate(spec: &SyntheticSpec) -> (Vec<RatingRecord>, Vec<TrustRecord>) {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n01 = Normal::new(0.0, 1.0).unwrap();
    let cats = spec.categories.max(1);
    let comms = spec.communities.max(1);
    let blocks = (spec.days / spec.regime_days).max(1) as usize;

    let cat_bias: Vec<f64> = (0..cats).map(|_| 0.3 * n01.sample(&mut rng)).collect();
    let item_cat: Vec<usize> = (0..spec.items).map(|i| if i < cats { i } else { rng.gen_range(0..cats) }).collect();
    let item_bias: Vec<f64> = item_cat.iter().map(|&c| cat_bias[c] + 0.35 * n01.sample(&mut rng)).collect();
    let popularity: Vec<f64> = (0..spec.items).map(|_| rng.gen_range(0.2f64..1.0).powi(3)).collect();
    let mut by_cat: Vec<Vec<usize>> = vec![Vec::new(); cats];
    for (i, &c) in item_cat.iter().enumerate() {
        by_cat[c].push(i);
    }
    let pickers: Vec<Option<WeightedIndex<f64>>> = by_cat
        .iter()
        .map(|members| WeightedIndex::new(members.iter().map(|&i| popularity[i])).ok())
        .collect();
    let all_items = WeightedIndex::new(&popularity).expect("at least one item");

    let comm_bias: Vec<f64> = (0..comms).map(|_| 0.3 * n01.sample(&mut rng)).collect();
    let comm_fav: Vec<usize> = (0..comms).map(|_| rng.gen_range(0..cats)).collect();
    let user_comm: Vec<usize> = (0..spec.users).map(|_| rng.gen_range(0..comms)).collect();

    let mut ratings = Vec::new();
    for u in 0..spec.users {
        let comm = user_comm[u];
        let bias = comm_bias[comm] + 0.25 * n01.sample(&mut rng);
        let fav_early = if rng.gen_bool(0.7) { comm_fav[comm] } else { rng.gen_range(0..cats) };
        let fav_late = if rng.gen_bool(0.5) { rng.gen_range(0..cats) } else { fav_early };
        let switch_day = rng.gen_range(spec.days / 4..=3 * spec.days / 4);

        let mut mood = Vec::with_capacity(blocks);
        for b in 0..blocks {
            let m = if b > 0 && rng.gen_bool(0.3) { mood[b - 1] } else { rng.gen_range(0..cats) };
            mood.push(m);
        }

        let n = rng.gen_range(spec.min_ratings..=spec.max_ratings.max(spec.min_ratings));
        let active = rng.gen_range(2..=5usize).min(blocks);
        let mut chosen: Vec<usize> = (0..blocks).collect();
        chosen.shuffle(&mut rng);
        chosen.truncate(active);

        for k in 0..n {
            let block = chosen[k % active];
            let mut ts = spec.start
                + block as i64 * spec.regime_days * SECONDS_PER_DAY
                + rng.gen_range(0..spec.regime_days * SECONDS_PER_DAY);
            if u == 0 && k == 0 {
                ts = spec.start;
            }
            let day = (ts - spec.start) / SECONDS_PER_DAY;
            let fav = if day < switch_day { fav_early } else { fav_late };
            let m = mood[block];
            let roll: f64 = rng.gen();
            let target_cat = if roll < 0.55 { Some(m) } else if roll < 0.8 { Some(fav) } else { None };
            let item = match target_cat.and_then(|c| pickers[c].as_ref().map(|p| by_cat[c][p.sample(&mut rng)])) {
                Some(i) => i,
                None => all_items.sample(&mut rng),
            };
            let c = item_cat[item];
            let score = 3.55
                + bias
                + item_bias[item]
                + if c == fav { 0.5 } else { -0.1 }
                + if c == m { 0.7 } else { -0.2 }
                + spec.noise * n01.sample(&mut rng);
            ratings.push(RatingRecord {
                user_id: u as u64 + 1,
                item_id: item as u64 + 1,
                category_id: c as u64 + 1,
                rating: score.round().clamp(1.0, 5.0),
                timestamp: ts,
            });
        }
    }
    ratings.sort_by_key(|r| (r.timestamp, r.user_id, r.item_id));

    let mut trusts = Vec::new();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); comms];
    for (u, &c) in user_comm.iter().enumerate() {
        members[c].push(u);
    }
    for u in 0..spec.users {
        for _ in 0..spec.trust_per_user {
            let pool = &members[user_comm[u]];
            let v = if rng.gen_bool(0.8) && pool.len() > 1 {
                pool[rng.gen_range(0..pool.len())]
            } else {
                rng.gen_range(0..spec.users)
            };
            if v != u {
                trusts.push(TrustRecord {
                    truster: u as u64 + 1,
                    trustee: v as u64 + 1,
                });
            }
        }
    }
    trusts.sort();
    trusts.dedup();
    (ratings, trusts)
}

/// Ten users and fifteen items; with 10-day spans every user is active in at
/// least two spans.
pub fn toy(seed: u64) -> (Vec<RatingRecord>, Vec<TrustRecord>) {
    let spec = SyntheticSpec {
        users: 10,
        items: 15,
        categories: 3,
        communities: 2,
        min_ratings: 4,
        max_ratings: 6,
        days: 30,
        regime_days: 10,
        trust_per_user: 1,
        seed,
        ..Default::default()
    };
    generate(&spec)
}

pub const FIGURE2_WEEK: i64 = 7 * SECONDS_PER_DAY;

/// Two users, four items, two one-week spans each. Items 3 and 4 share a
/// category; users 1 and 2 trust each other. Timestamps start at 0.
pub fn figure2() -> (Vec<RatingRecord>, Vec<TrustRecord>) {
    let day = SECONDS_PER_DAY;
    let cat = |item: u64| if item == 3 || item == 4 { 30 } else { item * 10 };
    let rows: [(u64, u64, f64, i64); 8] = [
        (1, 1, 4.0, 0),
        (1, 3, 5.0, 2 * day),
        (1, 4, 3.0, 8 * day),
        (2, 3, 4.0, day),
        (2, 4, 2.0, 3 * day),
        (2, 1, 5.0, 9 * day),
        (2, 2, 3.0, 12 * day),
        (1, 3, 4.0, 5 * day),
    ];
    let ratings = rows
        .iter()
        .map(|&(u, i, r, ts)| RatingRecord {
            user_id: u,
            item_id: i,
            category_id: cat(i),
            rating: r,
            timestamp: ts,
        })
        .collect();
    (ratings, vec![TrustRecord { truster: 1, trustee: 2 }])
}

use std::collections::BTreeSet;

use hetrec::dataset::{
    build_dataset, parse_ratings, parse_trust, split, write_ratings, write_trust, RatingRecord, SplitSpec, TrustRecord,
};
use hetrec::eval::{mae, rmse, welch_statistic, welch_t_test, GlobalMeanBaseline};
use hetrec::graph::AblationFlags;
use hetrec::model::checkpoint::Checkpoint;
use hetrec::model::{Model, ModelConfig};
use hetrec::{OriginPolicy, RunConfig};
use proptest::prelude::*;

fn record() -> impl Strategy<Value = RatingRecord> {
    (1u64..40, 1u64..30, 1.0f64..=5.0, -1_000_000i64..2_000_000_000).prop_map(|(u, i, rating, timestamp)| RatingRecord {
        user_id: u,
        item_id: i,
        // category as a function of item so datasets stay consistent
        category_id: i % 4,
        rating,
        timestamp,
    })
}

fn records() -> impl Strategy<Value = Vec<RatingRecord>> {
    prop::collection::vec(record(), 1..80)
}

fn sample() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-5.0f64..5.0, 2..12)
}

proptest! {
    #[test]
    fn ratings_survive_write_then_parse(rs in records()) {
        let mut buf = Vec::new();
        write_ratings(&mut buf, &rs).unwrap();
        prop_assert_eq!(parse_ratings(buf.as_slice()).unwrap(), rs);
    }

    #[test]
    fn trust_survives_write_then_parse(pairs in prop::collection::btree_set((1u64..20, 1u64..20), 0..40)) {
        let ts: Vec<TrustRecord> = pairs
            .into_iter()
            .filter(|(a, b)| a != b)
            .map(|(truster, trustee)| TrustRecord { truster, trustee })
            .collect();
        let mut buf = Vec::new();
        write_trust(&mut buf, &ts).unwrap();
        prop_assert_eq!(parse_trust(buf.as_slice()).unwrap(), ts);
    }

    #[test]
    fn id_indices_are_contiguous_bijections(rs in records()) {
        let ds = build_dataset(rs.clone(), &[]).unwrap();
        let raw_users: BTreeSet<u64> = rs.iter().map(|r| r.user_id).collect();
        prop_assert_eq!(ds.num_users(), raw_users.len());
        for idx in 0..ds.num_users() {
            prop_assert_eq!(ds.user_index.index_of(ds.user_index.raw_of(idx)), Some(idx));
        }
        for raw in raw_users {
            let idx = ds.user_index.index_of(raw).unwrap();
            prop_assert_eq!(ds.user_index.raw_of(idx), raw);
        }
        for (r, rec) in ds.ratings.iter().zip(&rs) {
            prop_assert_eq!(ds.item_index.raw_of(r.item), rec.item_id);
            prop_assert_eq!(ds.category_index.raw_of(ds.category_of[r.item]), rec.category_id);
        }
    }

    #[test]
    fn split_partitions_the_ratings(rs in records(), seed in 0u64..1000, a in 1u32..8, b in 1u32..8, c in 1u32..8) {
        let total = (a + b + c) as f64;
        let spec = SplitSpec::new(a as f64 / total, b as f64 / total, 1.0 - (a + b) as f64 / total, seed).unwrap();
        let ds = build_dataset(rs, &[]).unwrap();
        let s = split(&ds, &spec).unwrap();
        let mut ids: Vec<usize> = s.train.iter().chain(&s.val).chain(&s.test).map(|r| r.id).collect();
        ids.sort();
        prop_assert_eq!(ids, (0..ds.ratings.len()).collect::<Vec<_>>());
        let n = ds.ratings.len() as f64;
        prop_assert!((s.train.len() as f64 - n * spec.train_fraction).abs() <= 1.0);
        prop_assert_eq!(split(&ds, &spec).unwrap(), s);
    }

    #[test]
    fn mae_never_exceeds_rmse(pairs in prop::collection::vec((1.0f64..5.0, 1.0f64..5.0), 1..100)) {
        let (p, t): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let m = mae(&p, &t).unwrap();
        let r = rmse(&p, &t).unwrap();
        prop_assert!(m <= r + 1e-15);
        let direct = p.iter().zip(&t).map(|(x, y)| (x - y).abs()).sum::<f64>() / p.len() as f64;
        prop_assert!((m - direct).abs() < 1e-12);
    }

    #[test]
    fn welch_is_symmetric_and_shift_invariant(a in sample(), b in sample(), shift in -100.0f64..100.0) {
        let p = welch_t_test(&a, &b).unwrap();
        prop_assert!((0.0..=1.0).contains(&p));
        prop_assert!((p - welch_t_test(&b, &a).unwrap()).abs() < 1e-12);
        let sa: Vec<f64> = a.iter().map(|x| x + shift).collect();
        let sb: Vec<f64> = b.iter().map(|x| x + shift).collect();
        prop_assert!((p - welch_t_test(&sa, &sb).unwrap()).abs() < 1e-6);
        let (t, _) = welch_statistic(&a, &b).unwrap();
        let (t_rev, _) = welch_statistic(&b, &a).unwrap();
        prop_assert!((t + t_rev).abs() < 1e-12);
    }

    #[test]
    fn baseline_error_is_mean_absolute_deviation(train in prop::collection::vec(1.0f64..5.0, 1..30), test in prop::collection::vec(1.0f64..5.0, 1..30)) {
        let to_ratings = |xs: &[f64]| xs.iter().enumerate().map(|(id, &rating)| hetrec::dataset::Rating { id, user: 0, item: 0, rating, timestamp: 0 }).collect::<Vec<_>>();
        let b = GlobalMeanBaseline::fit(&to_ratings(&train)).unwrap();
        let mean = train.iter().sum::<f64>() / train.len() as f64;
        let expected = test.iter().map(|y| (y - mean).abs()).sum::<f64>() / test.len() as f64;
        prop_assert!((b.evaluate(&to_ratings(&test)).unwrap().mae - expected).abs() < 1e-12);
    }

    #[test]
    fn effective_config_reloads_equal(
        span_days in 0.5f64..400.0,
        dim in 1usize..200,
        dropout in 0.0f64..0.95,
        lr in 1e-6f64..1.0,
        seeds in prop::collection::vec(0u64..1000, 1..5),
        origin in prop_oneof![Just(OriginPolicy::MinTimestamp), Just(OriginPolicy::Epoch), (-10i64..10_000).prop_map(OriginPolicy::Explicit)],
        ablation in 0usize..5,
    ) {
        let mut c = RunConfig::default();
        c.span_days = span_days;
        c.embed_dim = dim;
        c.dropout = dropout;
        c.learning_rate = lr;
        c.seeds = seeds;
        c.origin = origin;
        c.flags = AblationFlags::named_variants()[ablation].1;
        let back = RunConfig::from_text(&c.to_text()).unwrap();
        prop_assert_eq!(&back, &c);
        prop_assert_eq!(back.digest(), c.digest());
    }

    #[test]
    fn checkpoints_round_trip_bit_exactly(seed in 0u64..1000, dim in 1usize..6) {
        let (r, t) = hetrec::synth::toy(seed % 5);
        let ds = build_dataset(r, &t).unwrap();
        let config = hetrec::graph::GraphConfig {
            span: hetrec::graph::SpanParams::from_days(ds.min_timestamp().unwrap(), 10.0).unwrap(),
            flags: AblationFlags::default(),
            item_item_cap: 10,
            item_item_seed: 0,
        };
        let g = hetrec::graph::build_graph(&ds, &ds.ratings, &config).unwrap();
        let model = Model::init(ModelConfig { embed_dim: dim, ..Default::default() }, &g, 3.7, seed).unwrap();
        let ck = Checkpoint { model, digest: format!("{seed:x}"), seed };
        let bytes = ck.to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        prop_assert_eq!(back.to_bytes(), bytes);
        prop_assert_eq!(back, ck);
    }
}

#[test]
fn welch_matches_reference_values() {
    // reference statistics and p-values from scipy.stats.ttest_ind(equal_var=False)
    let cases: [(&[f64], &[f64], f64, f64); 2] = [
        (&[0.71, 0.74, 0.69, 0.73, 0.72], &[0.75, 0.78, 0.77, 0.74], -3.3484122217522234, 0.013043184964708823),
        (&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], &[2.5, 3.5, 9.0], -0.6943650748294137, 0.5445227116756812),
    ];
    for (a, b, t_ref, p_ref) in cases {
        let (t, _) = welch_statistic(a, b).unwrap();
        assert!((t - t_ref).abs() < 1e-10, "{t} vs {t_ref}");
        let p = welch_t_test(a, b).unwrap();
        assert!((p - p_ref).abs() < 1e-8, "{p} vs {p_ref}");
    }
}

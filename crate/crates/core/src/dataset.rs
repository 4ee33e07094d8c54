//! Rating and trust ingestion, re-indexing, and train/validation/test splits.
//!
//! Canonical formats:
//!
//! * ratings: `user,item,category,rating,timestamp`, one interaction per line
//! * trust: `truster,trustee`
//!
//! A header line is accepted when its first field is not numeric.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_RATING: f64 = 1.0;
pub const MAX_RATING: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatingRecord {
    pub user_id: u64,
    pub item_id: u64,
    pub category_id: u64,
    pub rating: f64,
    pub timestamp: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TrustRecord {
    pub truster: u64,
    pub trustee: u64,
}

/// A rating expressed in contiguous indices. `id` is the position of the
/// record in [`Dataset::ratings`] and identifies it across splits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rating {
    pub id: usize,
    pub user: usize,
    pub item: usize,
    pub rating: f64,
    pub timestamp: i64,
}

/// Bidirectional map between raw identifiers and contiguous indices,
/// assigned in order of first appearance.
#[derive(Debug, Clone, Default)]
pub struct IdIndex {
    raw: Vec<u64>,
    lookup: HashMap<u64, usize>,
}

impl IdIndex {
    pub fn intern(&mut self, raw: u64) -> usize {
        if let Some(&idx) = self.lookup.get(&raw) {
            return idx;
        }
        let idx = self.raw.len();
        self.raw.push(raw);
        self.lookup.insert(raw, idx);
        idx
    }

    pub fn index_of(&self, raw: u64) -> Option<usize> {
        self.lookup.get(&raw).copied()
    }

    pub fn raw_of(&self, idx: usize) -> u64 {
        self.raw[idx]
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub records: Vec<RatingRecord>,
    pub ratings: Vec<Rating>,
    /// Directed, deduplicated trust pairs in user indices.
    pub trusts: Vec<(usize, usize)>,
    pub user_index: IdIndex,
    pub item_index: IdIndex,
    pub category_index: IdIndex,
    /// Category index of every item index.
    pub category_of: Vec<usize>,
}

/// Table-style dataset counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub items: usize,
    pub ratings: usize,
    pub social: usize,
    pub users: usize,
    pub categories: usize,
}

impl Dataset {
    pub fn num_users(&self) -> usize {
        self.user_index.len()
    }

    pub fn num_items(&self) -> usize {
        self.item_index.len()
    }

    pub fn num_categories(&self) -> usize {
        self.category_index.len()
    }

    pub fn summary(&self) -> DatasetSummary {
        DatasetSummary {
            items: self.num_items(),
            ratings: self.ratings.len(),
            social: self.trusts.len(),
            users: self.num_users(),
            categories: self.num_categories(),
        }
    }

    pub fn min_timestamp(&self) -> Option<i64> {
        self.ratings.iter().map(|r| r.timestamp).min()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub val_fraction: f64,
    pub test_fraction: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(train: f64, val: f64, test: f64, seed: u64) -> Result<Self> {
        let spec = Self {
            train_fraction: train,
            val_fraction: val,
            test_fraction: test,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let fractions = [self.train_fraction, self.val_fraction, self.test_fraction];
        if fractions.iter().any(|f| !(*f > 0.0)) {
            return Err(Error::Invalid(format!(
                "split fractions must be positive, got {fractions:?}"
            )));
        }
        let sum: f64 = fractions.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Invalid(format!(
                "split fractions must sum to 1, got {sum}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Splits {
    pub train: Vec<Rating>,
    pub val: Vec<Rating>,
    pub test: Vec<Rating>,
}

fn fields(line: &str) -> Vec<&str> {
    line.split(',').map(str::trim).collect()
}

fn is_header(line: &str) -> bool {
    let first = line.split(',').next().unwrap_or("").trim();
    !first.is_empty() && first.parse::<f64>().is_err()
}

fn parse_field<T: std::str::FromStr>(value: &str, name: &str, line: usize) -> Result<T> {
    value.parse().map_err(|_| Error::Parse {
        line,
        msg: format!("invalid {name} {value:?}"),
    })
}

fn read_err(e: std::io::Error, line: usize) -> Error {
    Error::Parse {
        line,
        msg: format!("read failed: {e}"),
    }
}

pub fn parse_ratings<R: BufRead>(source: R) -> Result<Vec<RatingRecord>> {
    let mut out = Vec::new();
    for (n, line) in source.lines().enumerate() {
        let lineno = n + 1;
        let line = line.map_err(|e| read_err(e, lineno))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || (n == 0 && is_header(trimmed)) {
            continue;
        }
        let f = fields(trimmed);
        if f.len() != 5 {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("expected 5 fields, found {}", f.len()),
            });
        }
        let rating: f64 = parse_field(f[3], "rating", lineno)?;
        if !(MIN_RATING..=MAX_RATING).contains(&rating) {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("rating {rating} out of range [1, 5]"),
            });
        }
        out.push(RatingRecord {
            user_id: parse_field(f[0], "user id", lineno)?,
            item_id: parse_field(f[1], "item id", lineno)?,
            category_id: parse_field(f[2], "category id", lineno)?,
            rating,
            timestamp: parse_field(f[4], "timestamp", lineno)?,
        });
    }
    Ok(out)
}

/// Parses directed trust pairs, dropping exact duplicates and rejecting
/// self-loops.
pub fn parse_trust<R: BufRead>(source: R) -> Result<Vec<TrustRecord>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (n, line) in source.lines().enumerate() {
        let lineno = n + 1;
        let line = line.map_err(|e| read_err(e, lineno))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || (n == 0 && is_header(trimmed)) {
            continue;
        }
        let f = fields(trimmed);
        if f.len() != 2 {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("expected 2 fields, found {}", f.len()),
            });
        }
        let rec = TrustRecord {
            truster: parse_field(f[0], "truster id", lineno)?,
            trustee: parse_field(f[1], "trustee id", lineno)?,
        };
        if rec.truster == rec.trustee {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("self-loop trust for user {}", rec.truster),
            });
        }
        if seen.insert(rec) {
            out.push(rec);
        }
    }
    Ok(out)
}

pub fn write_ratings<W: Write>(mut sink: W, records: &[RatingRecord]) -> std::io::Result<()> {
    for r in records {
        writeln!(
            sink,
            "{},{},{},{},{}",
            r.user_id, r.item_id, r.category_id, r.rating, r.timestamp
        )?;
    }
    Ok(())
}

pub fn write_trust<W: Write>(mut sink: W, records: &[TrustRecord]) -> std::io::Result<()> {
    for t in records {
        writeln!(sink, "{},{}", t.truster, t.trustee)?;
    }
    Ok(())
}

/// Indexes parsed records. Users that only appear in the trust list still
/// receive an index.
pub fn build_dataset(records: Vec<RatingRecord>, trusts: &[TrustRecord]) -> Result<Dataset> {
    let mut user_index = IdIndex::default();
    let mut item_index = IdIndex::default();
    let mut category_index = IdIndex::default();
    let mut category_of: Vec<usize> = Vec::new();
    let mut ratings = Vec::with_capacity(records.len());

    for (id, r) in records.iter().enumerate() {
        let user = user_index.intern(r.user_id);
        let item = item_index.intern(r.item_id);
        let cat = category_index.intern(r.category_id);
        if item == category_of.len() {
            category_of.push(cat);
        } else if category_of[item] != cat {
            return Err(Error::Invalid(format!(
                "item {} listed under categories {} and {}",
                r.item_id,
                category_index.raw_of(category_of[item]),
                r.category_id
            )));
        }
        ratings.push(Rating {
            id,
            user,
            item,
            rating: r.rating,
            timestamp: r.timestamp,
        });
    }

    let mut seen = HashSet::new();
    let mut indexed_trusts = Vec::with_capacity(trusts.len());
    for t in trusts {
        if t.truster == t.trustee {
            return Err(Error::Invalid(format!("self-loop trust for user {}", t.truster)));
        }
        let pair = (user_index.intern(t.truster), user_index.intern(t.trustee));
        if seen.insert(pair) {
            indexed_trusts.push(pair);
        }
    }

    Ok(Dataset {
        records,
        ratings,
        trusts: indexed_trusts,
        user_index,
        item_index,
        category_index,
        category_of,
    })
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Reads and indexes a ratings file and a trust file.
pub fn load_dataset(ratings: &Path, trust: &Path) -> Result<Dataset> {
    let records = parse_ratings(open(ratings)?)?;
    let trusts = parse_trust(open(trust)?)?;
    build_dataset(records, &trusts)
}

/// Uniform random partition of the rating records. Trust links are not split.
pub fn split(dataset: &Dataset, spec: &SplitSpec) -> Result<Splits> {
    spec.validate()?;
    let n = dataset.ratings.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    order.shuffle(&mut rng);

    let n_train = ((n as f64) * spec.train_fraction).round() as usize;
    let n_val = (((n as f64) * spec.val_fraction).round() as usize).min(n - n_train.min(n));
    let n_train = n_train.min(n);

    let take = |idx: &[usize]| idx.iter().map(|&i| dataset.ratings[i]).collect::<Vec<_>>();
    Ok(Splits {
        train: take(&order[..n_train]),
        val: take(&order[n_train..n_train + n_val]),
        test: take(&order[n_train + n_val..]),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ratings(text: &str) -> Result<Vec<RatingRecord>> {
        parse_ratings(text.as_bytes())
    }

    #[test]
    fn parses_single_rating() {
        let r = ratings("1,7,3,4.0,946684800").unwrap();
        assert_eq!(
            r,
            vec![RatingRecord {
                user_id: 1,
                item_id: 7,
                category_id: 3,
                rating: 4.0,
                timestamp: 946684800
            }]
        );
    }

    #[test]
    fn empty_file_is_empty() {
        assert!(ratings("").unwrap().is_empty());
    }

    #[test]
    fn header_is_skipped() {
        let r = ratings("user,item,category,rating,timestamp\n1,7,3,4,10\n").unwrap();
        assert_eq!(r.len(), 1);
    }

    #[test]
    fn rating_out_of_range() {
        let err = ratings("1,7,3,9.0,946684800").unwrap_err();
        assert!(err.to_string().contains("out of range"), "{err}");
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let err = ratings("1,7,3,4.0,10\n1,7,3\n").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        let err = ratings("1,7,3,4.0,10.5").unwrap_err();
        assert!(err.to_string().contains("timestamp"), "{err}");
    }

    #[test]
    fn trust_dedup_and_direction() {
        let t = parse_trust("1,2\n1,2".as_bytes()).unwrap();
        assert_eq!(t, vec![TrustRecord { truster: 1, trustee: 2 }]);
        let t = parse_trust("1,2\n2,1".as_bytes()).unwrap();
        assert_eq!(t.len(), 2);
        assert!(parse_trust("5,5".as_bytes()).unwrap_err().to_string().contains("self-loop"));
        assert!(parse_trust("5".as_bytes()).is_err());
    }

    #[test]
    fn build_single_rating() {
        let d = build_dataset(ratings("1,7,3,4.0,10").unwrap(), &[]).unwrap();
        assert_eq!(d.num_users(), 1);
        assert_eq!(d.num_items(), 1);
        assert_eq!(d.category_of, vec![0]);
    }

    #[test]
    fn social_only_users_are_indexed() {
        let r = ratings("1,7,3,4.0,10").unwrap();
        let t = parse_trust("1,2\n3,1".as_bytes()).unwrap();
        let d = build_dataset(r, &t).unwrap();
        assert_eq!(d.summary().users, 3);
        assert_eq!(d.trusts, vec![(0, 1), (2, 0)]);
    }

    #[test]
    fn conflicting_category_rejected() {
        let r = ratings("1,7,3,4,10\n2,7,4,4,11").unwrap();
        assert!(build_dataset(r, &[]).is_err());
    }

    fn synthetic(n: usize) -> Dataset {
        let recs = (0..n)
            .map(|k| RatingRecord {
                user_id: (k % 13) as u64,
                item_id: (k % 29) as u64,
                category_id: (k % 29 % 4) as u64,
                rating: 1.0 + (k % 5) as f64,
                timestamp: k as i64,
            })
            .collect();
        build_dataset(recs, &[]).unwrap()
    }

    #[test]
    fn split_sizes() {
        let d = synthetic(10);
        let s = split(&d, &SplitSpec::new(0.6, 0.2, 0.2, 0).unwrap()).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (6, 2, 2));

        let d = synthetic(62452);
        let s = split(&d, &SplitSpec::new(0.8, 0.1, 0.1, 0).unwrap()).unwrap();
        assert!((s.train.len() as i64 - 49962).abs() <= 1);
        assert!((s.val.len() as i64 - 6245).abs() <= 1);
        assert!((s.test.len() as i64 - 6245).abs() <= 1);
    }

    #[test]
    fn split_rejects_bad_fractions() {
        assert!(SplitSpec::new(0.0, 0.5, 0.5, 0).is_err());
        assert!(SplitSpec::new(0.6, 0.2, 0.3, 0).is_err());
        assert!(SplitSpec::new(1.2, -0.1, -0.1, 0).is_err());
    }

    #[test]
    fn split_is_deterministic() {
        let d = synthetic(100);
        let spec = SplitSpec::new(0.8, 0.1, 0.1, 7).unwrap();
        let a = split(&d, &spec).unwrap();
        let b = split(&d, &spec).unwrap();
        assert_eq!(a.train, b.train);
        assert_eq!(a.test, b.test);
    }
}

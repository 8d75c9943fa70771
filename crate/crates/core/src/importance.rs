//! Per-token word importance and quintile bucketing.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Instance;
use crate::error::{Error, Result};
use crate::io;
use crate::lexicon::VocabStats;

pub const BUCKETS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceRecord {
    pub id: String,
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ImportanceMap {
    scores: BTreeMap<String, Vec<f64>>,
}

impl ImportanceMap {
    pub fn from_records(records: impl IntoIterator<Item = ImportanceRecord>) -> Result<Self> {
        let mut scores = BTreeMap::new();
        for r in records {
            if let Some(&bad) = r.scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
                return Err(Error::OutOfRange { id: r.id, value: bad });
            }
            if scores.contains_key(&r.id) {
                return Err(Error::DuplicateId(r.id));
            }
            scores.insert(r.id, r.scores);
        }
        Ok(Self { scores })
    }

    pub fn get(&self, id: &str) -> Option<&[f64]> {
        self.scores.get(id).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// Checks that every instance has exactly one score per context token.
    pub fn validate_against(&self, instances: &[Instance]) -> Result<()> {
        let mut missing = Vec::new();
        for inst in instances {
            match self.get(&inst.id) {
                None => missing.push(inst.id.clone()),
                Some(s) if s.len() != inst.context_token_count() => {
                    return Err(Error::LengthMismatch {
                        id: inst.id.clone(),
                        expected: inst.context_token_count(),
                        found: s.len(),
                    })
                }
                Some(_) => {}
            }
        }
        if missing.is_empty() {
            Ok(())
        } else {
            Err(Error::MissingIds(missing))
        }
    }

    pub fn to_records(&self) -> Vec<ImportanceRecord> {
        self.scores
            .iter()
            .map(|(id, s)| ImportanceRecord {
                id: id.clone(),
                scores: s.clone(),
            })
            .collect()
    }

    /// Rarity-based scores for every instance.
    pub fn fallback(instances: &[Instance], stats: &VocabStats) -> Self {
        let scores = instances
            .iter()
            .map(|i| (i.id.clone(), fallback_importance(i, stats)))
            .collect();
        Self { scores }
    }
}

pub fn load_importance(path: &Path) -> Result<ImportanceMap> {
    ImportanceMap::from_records(io::read_jsonl::<ImportanceRecord>(path)?)
}

/// `1 - count/max_count` per context token; unseen tokens score 1.
pub fn fallback_importance(instance: &Instance, stats: &VocabStats) -> Vec<f64> {
    let max = stats.max_count() as f64;
    instance
        .context_tokens()
        .map(|t| {
            let c = stats.count(t);
            if c == 0 || max == 0.0 {
                1.0
            } else {
                (1.0 - c as f64 / max).clamp(0.0, 1.0)
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BucketSpec {
    bucket: usize,
}

impl BucketSpec {
    pub fn new(bucket: usize) -> Result<Self> {
        if !(1..=BUCKETS).contains(&bucket) {
            return Err(Error::InvalidArgument(format!(
                "importance bucket must be in 1..=5, got {bucket}"
            )));
        }
        Ok(Self { bucket })
    }

    pub fn index(&self) -> usize {
        self.bucket
    }

    /// Percentile interval `[lower, upper)`.
    pub fn percentiles(&self) -> (u32, u32) {
        let b = self.bucket as u32;
        (20 * (b - 1), 20 * b)
    }

    /// Whether rank `r` (0-based, ascending) out of `n` falls in this bucket.
    fn contains_rank(&self, r: usize, n: usize) -> bool {
        let b = self.bucket;
        (b - 1) * n <= 5 * r && 5 * r < b * n
    }
}

/// Positions whose ascending rank percentile (ties by position) lies in the
/// bucket's interval. Bucket 1 holds the least important fifth.
pub fn bucketize(scores: &[f64], bucket: usize) -> Result<BTreeSet<usize>> {
    let spec = BucketSpec::new(bucket)?;
    if scores.is_empty() {
        return Err(Error::Empty("importance scores"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
    let n = scores.len();
    Ok(order
        .into_iter()
        .enumerate()
        .filter(|&(rank, _)| spec.contains_rank(rank, n))
        .map(|(_, pos)| pos)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{expand_instances, Dialogue, Utterance};
    use crate::lexicon::VocabRecord;
    use proptest::prelude::*;

    fn inst(ctx: &str) -> Instance {
        expand_instances(&[Dialogue {
            id: "d".into(),
            utterances: vec![Utterance::new(ctx), Utterance::new("r")],
        }])
        .unwrap()
        .remove(0)
    }

    #[test]
    fn load_examples() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("imp.jsonl");
        std::fs::write(&p, "{\"id\":\"x\",\"scores\":[0.1,0.9]}\n").unwrap();
        assert_eq!(load_importance(&p).unwrap().get("x").unwrap().len(), 2);

        std::fs::write(&p, "{\"id\":\"x\",\"scores\":[1.3]}\n").unwrap();
        assert!(matches!(load_importance(&p), Err(Error::OutOfRange { .. })));

        std::fs::write(&p, "{\"id\":\"x\",\"scores\":[0.1]}\n{\"id\":\"x\",\"scores\":[0.2]}\n").unwrap();
        assert!(matches!(load_importance(&p), Err(Error::DuplicateId(id)) if id == "x"));
    }

    #[test]
    fn validate_lengths() {
        let i = inst("a b c");
        let ok = ImportanceMap::from_records([ImportanceRecord { id: i.id.clone(), scores: vec![0.0; 3] }]).unwrap();
        ok.validate_against(std::slice::from_ref(&i)).unwrap();
        let bad = ImportanceMap::from_records([ImportanceRecord { id: i.id.clone(), scores: vec![0.0; 2] }]).unwrap();
        assert!(matches!(bad.validate_against(&[i]), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn fallback_examples() {
        let s = VocabStats::from_records([
            VocabRecord { word: "a".into(), count: 4 },
            VocabRecord { word: "b".into(), count: 1 },
        ])
        .unwrap();
        assert_eq!(fallback_importance(&inst("x y"), &s), vec![1.0, 1.0]);
        assert_eq!(fallback_importance(&inst("a b z"), &s), vec![0.0, 0.75, 1.0]);
    }

    #[test]
    fn bucket_examples() {
        let s = [0.5, 0.1, 0.9, 0.3, 0.7];
        assert_eq!(bucketize(&s, 1).unwrap(), BTreeSet::from([1]));
        let ten: Vec<f64> = (0..10).map(|i| i as f64 / 10.0).collect();
        assert_eq!(bucketize(&ten, 5).unwrap(), BTreeSet::from([8, 9]));
        assert_eq!(bucketize(&[0.5; 10], 3).unwrap(), BTreeSet::from([4, 5]));
        assert!(bucketize(&ten, 0).is_err());
        assert!(bucketize(&ten, 6).is_err());
        assert!(bucketize(&[], 1).is_err());
        assert_eq!(BucketSpec::new(3).unwrap().percentiles(), (40, 60));
    }

    proptest! {
        #[test]
        fn buckets_partition(scores in proptest::collection::vec(0.0f64..=1.0, 1..60)) {
            let sets: Vec<BTreeSet<usize>> = (1..=5).map(|b| bucketize(&scores, b).unwrap()).collect();
            let total: usize = sets.iter().map(BTreeSet::len).sum();
            prop_assert_eq!(total, scores.len());
            let union: BTreeSet<usize> = sets.iter().flatten().copied().collect();
            prop_assert_eq!(union.len(), scores.len());
            let max = sets.iter().map(BTreeSet::len).max().unwrap();
            let min = sets.iter().map(BTreeSet::len).min().unwrap();
            prop_assert!(max - min <= 1);
        }

        #[test]
        fn buckets_rank_invariant(scores in proptest::collection::vec(0.0f64..=1.0, 1..40), b in 1usize..=5) {
            let squashed: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp() - 7.0).collect();
            prop_assert_eq!(bucketize(&scores, b).unwrap(), bucketize(&squashed, b).unwrap());
        }

        #[test]
        fn fallback_in_unit_interval(words in proptest::collection::vec("[a-d]{1,2}", 1..12), counts in proptest::collection::vec(1u64..100, 4)) {
            let s = VocabStats::from_records(["a", "b", "c", "d"].iter().zip(&counts).map(|(w, &c)| VocabRecord { word: w.to_string(), count: c })).unwrap();
            let scores = fallback_importance(&inst(&words.join(" ")), &s);
            prop_assert!(scores.iter().all(|x| (0.0..=1.0).contains(x)));
        }
    }
}

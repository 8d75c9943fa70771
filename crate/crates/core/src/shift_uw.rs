//! Word-level corruption: replace context words with unknown (or, as a
//! control, frequent) synonyms.

use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::corpus::{Instance, TokenPos};
use crate::error::{Error, Result};
use crate::importance::{bucketize, BucketSpec, ImportanceMap, BUCKETS};
use crate::lexicon::{select_replacement, ReplacementMode, SynonymLexicon, VocabStats};
use crate::seed::rng_for;

/// Replacement ratio used whenever targets are chosen by importance bucket.
pub const BUCKET_RATIO: f64 = 0.20;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UwConfig {
    pub mode: ReplacementMode,
    ratio: f64,
    bucket: Option<BucketSpec>,
    pub seed: u64,
}

impl UwConfig {
    pub fn with_ratio(mode: ReplacementMode, ratio: f64, seed: u64) -> Result<Self> {
        if !(ratio > 0.0 && ratio <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "replacement ratio must be in (0, 1], got {ratio}"
            )));
        }
        Ok(Self {
            mode,
            ratio,
            bucket: None,
            seed,
        })
    }

    pub fn with_bucket(mode: ReplacementMode, bucket: usize, seed: u64) -> Result<Self> {
        Ok(Self {
            mode,
            ratio: BUCKET_RATIO,
            bucket: Some(BucketSpec::new(bucket)?),
            seed,
        })
    }

    pub fn ratio(&self) -> f64 {
        self.ratio
    }

    pub fn bucket(&self) -> Option<usize> {
        self.bucket.map(|b| b.index())
    }

    /// e.g. `uw:r=0.20`, `kw:r=0.10`, `uw:b=3`.
    pub fn shift_tag(&self) -> String {
        match self.bucket {
            Some(b) => format!("{}:b={}", self.mode.tag(), b.index()),
            None => format!("{}:r={:.2}", self.mode.tag(), self.ratio),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShiftStats {
    pub kept: usize,
    pub dropped: usize,
    pub avg_replacements: f64,
}

impl ShiftStats {
    fn from_kept(kept: &[Instance], input: usize) -> Self {
        let total: usize = kept.iter().map(|i| i.provenance.replaced_count).sum();
        Self {
            kept: kept.len(),
            dropped: input - kept.len(),
            avg_replacements: if kept.is_empty() {
                0.0
            } else {
                total as f64 / kept.len() as f64
            },
        }
    }
}

/// Number of context tokens to replace: `ratio * tokens`, rounded half up.
pub fn required_targets(instance: &Instance, ratio: f64) -> usize {
    // The epsilon absorbs decimal ratios such as 0.15 landing a hair below .5.
    (ratio * instance.context_token_count() as f64 + 0.5 + 1e-9).floor() as usize
}

fn rewrite(instance: &Instance, replacements: Vec<(TokenPos, String)>, tag: String) -> Instance {
    let mut per_utt: BTreeMap<usize, Vec<(usize, String)>> = BTreeMap::new();
    let mut positions: Vec<TokenPos> = Vec::with_capacity(replacements.len());
    for ((u, t), word) in replacements {
        positions.push((u, t));
        per_utt.entry(u).or_default().push((t, word));
    }
    positions.sort_unstable();
    let context = instance
        .context
        .iter()
        .enumerate()
        .map(|(u, utt)| match per_utt.get(&u) {
            Some(reps) => utt.replace_tokens(reps),
            None => utt.clone(),
        })
        .collect();
    let mut out = instance.clone();
    out.context = context;
    out.provenance.shift_tag = tag;
    out.provenance.replaced_count = positions.len();
    out.provenance.replaced_positions = positions;
    out
}

fn try_replace(
    instance: &Instance,
    pos: TokenPos,
    config: &UwConfig,
    lexicon: &SynonymLexicon,
    stats: &VocabStats,
) -> Option<String> {
    let word = &instance.context[pos.0].tokens()[pos.1];
    select_replacement(word, lexicon, stats, config.mode)
}

/// Corrupts one instance. `None` means the instance is dropped: in ratio mode
/// when the required number of replacements cannot be reached, in bucket mode
/// when no token of the bucket could be replaced.
pub fn apply_uw(
    instance: &Instance,
    config: &UwConfig,
    lexicon: &SynonymLexicon,
    stats: &VocabStats,
    importance: Option<&[f64]>,
) -> Result<Option<Instance>> {
    let positions = instance.token_positions();
    let tag = config.shift_tag();
    match config.bucket {
        None => {
            let required = required_targets(instance, config.ratio);
            if required == 0 {
                return Ok(None);
            }
            let mut order = positions;
            // The order depends only on seed and id, so targets at a higher
            // ratio extend those chosen at a lower one.
            order.shuffle(&mut rng_for(config.seed, "uw-order", &instance.id, 0));
            let mut reps = Vec::with_capacity(required);
            for pos in order {
                if let Some(w) = try_replace(instance, pos, config, lexicon, stats) {
                    reps.push((pos, w));
                    if reps.len() == required {
                        return Ok(Some(rewrite(instance, reps, tag)));
                    }
                }
            }
            Ok(None)
        }
        Some(spec) => {
            let scores = importance.ok_or_else(|| {
                Error::Config("importance bucket selected but no importance scores given".into())
            })?;
            if scores.len() != positions.len() {
                return Err(Error::LengthMismatch {
                    id: instance.id.clone(),
                    expected: positions.len(),
                    found: scores.len(),
                });
            }
            if positions.is_empty() {
                return Ok(None);
            }
            let reps: Vec<(TokenPos, String)> = bucketize(scores, spec.index())?
                .into_iter()
                .filter_map(|flat| {
                    let pos = positions[flat];
                    try_replace(instance, pos, config, lexicon, stats).map(|w| (pos, w))
                })
                .collect();
            Ok((!reps.is_empty()).then(|| rewrite(instance, reps, tag)))
        }
    }
}

fn scores_for<'a>(
    importance: Option<&'a ImportanceMap>,
    instance: &Instance,
    config: &UwConfig,
) -> Result<Option<&'a [f64]>> {
    match (config.bucket, importance) {
        (None, _) => Ok(None),
        (Some(_), None) => Err(Error::Config(
            "importance bucket selected but no importance map given".into(),
        )),
        (Some(_), Some(map)) => map
            .get(&instance.id)
            .map(Some)
            .ok_or_else(|| Error::MissingIds(vec![instance.id.clone()])),
    }
}

pub fn shift_dataset_uw(
    instances: &[Instance],
    config: &UwConfig,
    lexicon: &SynonymLexicon,
    stats: &VocabStats,
    importance: Option<&ImportanceMap>,
) -> Result<(Vec<Instance>, ShiftStats)> {
    let mut kept = Vec::new();
    for inst in instances {
        let scores = scores_for(importance, inst, config)?;
        if let Some(out) = apply_uw(inst, config, lexicon, stats, scores)? {
            kept.push(out);
        }
    }
    let stats = ShiftStats::from_kept(&kept, instances.len());
    Ok((kept, stats))
}

/// Runs all five importance buckets and keeps only the instances that
/// survive in every bucket, so the bucket datasets are comparable.
pub fn shift_dataset_uw_buckets_intersected(
    instances: &[Instance],
    mode: ReplacementMode,
    seed: u64,
    lexicon: &SynonymLexicon,
    stats: &VocabStats,
    importance: &ImportanceMap,
) -> Result<Vec<(Vec<Instance>, ShiftStats)>> {
    let mut per_bucket = Vec::with_capacity(BUCKETS);
    for b in 1..=BUCKETS {
        let cfg = UwConfig::with_bucket(mode, b, seed)?;
        per_bucket.push(shift_dataset_uw(instances, &cfg, lexicon, stats, Some(importance))?.0);
    }
    let mut common: HashSet<&str> = per_bucket[0].iter().map(|i| i.id.as_str()).collect();
    for set in &per_bucket[1..] {
        let ids: HashSet<&str> = set.iter().map(|i| i.id.as_str()).collect();
        common.retain(|id| ids.contains(id));
    }
    let common: HashSet<String> = common.into_iter().map(str::to_string).collect();
    Ok(per_bucket
        .into_iter()
        .map(|set| {
            let kept: Vec<Instance> = set.into_iter().filter(|i| common.contains(&i.id)).collect();
            let st = ShiftStats::from_kept(&kept, instances.len());
            (kept, st)
        })
        .collect())
}

//! Accuracy (R@1), Brier score, and binned calibration error.

use std::collections::HashMap;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{check_unique_ids, CandidateSet};
use crate::error::{Error, Result};
use crate::io;

pub const DEFAULT_ECE_BINS: usize = 10;

/// Anything that carries a probability vector over an instance's candidates.
pub trait Probabilities {
    fn instance_id(&self) -> &str;
    fn probs(&self) -> &[f64];
}

/// Index of the largest probability; ties go to the lowest index.
pub fn argmax(probs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate().skip(1) {
        if p > probs[best] {
            best = i;
        }
    }
    best
}

pub fn recall_at_1(probs: &[f64], gold_index: usize) -> u32 {
    u32::from(argmax(probs) == gold_index)
}

/// Squared distance to the one-hot gold vector, summed over all candidates.
pub fn brier(probs: &[f64], gold_index: usize) -> f64 {
    probs
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let y = if i == gold_index { 1.0 } else { 0.0 };
            (p - y) * (p - y)
        })
        .sum()
}

/// Equal-width bins over `[0, 1]`; bin `i` is `[i/B, (i+1)/B)` and the last
/// bin also holds 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EceBinning {
    bins: usize,
}

impl EceBinning {
    pub fn new(bins: usize) -> Result<Self> {
        if bins < 1 {
            return Err(Error::InvalidArgument("ECE needs at least one bin".into()));
        }
        Ok(Self { bins })
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn edge(&self, i: usize) -> f64 {
        i as f64 / self.bins as f64
    }

    pub fn bin_of(&self, confidence: f64) -> usize {
        let c = confidence.clamp(0.0, 1.0);
        let mut idx = ((c * self.bins as f64).floor() as usize).min(self.bins - 1);
        // floor(c * B) can disagree with the edge comparison by one ulp
        while idx > 0 && c < self.edge(idx) {
            idx -= 1;
        }
        while idx + 1 < self.bins && c >= self.edge(idx + 1) {
            idx += 1;
        }
        idx
    }
}

impl Default for EceBinning {
    fn default() -> Self {
        Self {
            bins: DEFAULT_ECE_BINS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EceMode {
    /// Top-1 confidence against top-1 correctness.
    #[default]
    Top1,
    /// Every candidate probability as a binary forecast of "is gold".
    PerCandidate,
}

impl FromStr for EceMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "top1" => Ok(EceMode::Top1),
            "percandidate" => Ok(EceMode::PerCandidate),
            _ => Err(Error::InvalidArgument(format!("unknown ECE mode `{s}`"))),
        }
    }
}

fn binned_gap(points: impl Iterator<Item = (f64, f64)>, binning: EceBinning) -> Result<f64> {
    let mut count = vec![0usize; binning.bins];
    let mut conf = vec![0.0; binning.bins];
    let mut hits = vec![0.0; binning.bins];
    let mut n = 0usize;
    for (c, y) in points {
        let b = binning.bin_of(c);
        count[b] += 1;
        conf[b] += c;
        hits[b] += y;
        n += 1;
    }
    if n == 0 {
        return Err(Error::Empty("predictions for ECE"));
    }
    Ok((0..binning.bins)
        .filter(|&b| count[b] > 0)
        .map(|b| {
            let nb = count[b] as f64;
            (nb / n as f64) * (hits[b] / nb - conf[b] / nb).abs()
        })
        .sum())
}

/// `sum_b (n_b / n) |acc_b - conf_b|` with top-1 confidence; empty bins
/// contribute nothing.
pub fn ece(predictions: &[(&[f64], usize)], binning: EceBinning) -> Result<f64> {
    binned_gap(
        predictions.iter().map(|(p, g)| {
            let top = argmax(p);
            (p[top], f64::from(u8::from(top == *g)))
        }),
        binning,
    )
}

pub fn ece_per_candidate(predictions: &[(&[f64], usize)], binning: EceBinning) -> Result<f64> {
    binned_gap(
        predictions.iter().flat_map(|(p, g)| {
            p.iter()
                .enumerate()
                .map(move |(i, &pi)| (pi, f64::from(u8::from(i == *g))))
        }),
        binning,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub method: String,
    pub shift_tag: String,
    pub n: usize,
    pub acc: f64,
    pub brier: f64,
    pub ece: f64,
}

pub fn load_reports(path: &Path) -> Result<Vec<MetricsRow>> {
    io::read_jsonl(path)
}

/// Scores predictions against their candidate sets. Instances are processed
/// in id order so the result does not depend on input order.
pub fn evaluate<P: Probabilities>(
    predictions: &[P],
    candidate_sets: &[CandidateSet],
    method: &str,
    shift_tag: &str,
    binning: EceBinning,
    mode: EceMode,
) -> Result<MetricsRow> {
    if predictions.is_empty() {
        return Err(Error::Empty("predictions"));
    }
    check_unique_ids(predictions.iter().map(|p| p.instance_id()))?;
    let sets: HashMap<&str, &CandidateSet> = candidate_sets
        .iter()
        .map(|s| (s.instance_id.as_str(), s))
        .collect();
    let mut unknown: Vec<String> = predictions
        .iter()
        .filter(|p| !sets.contains_key(p.instance_id()))
        .map(|p| p.instance_id().to_string())
        .collect();
    if !unknown.is_empty() {
        unknown.sort();
        return Err(Error::UnknownIds(unknown));
    }
    let mut ordered: Vec<&P> = predictions.iter().collect();
    ordered.sort_by(|a, b| a.instance_id().cmp(b.instance_id()));
    let mut pairs = Vec::with_capacity(ordered.len());
    for p in &ordered {
        let set = sets[p.instance_id()];
        if p.probs().len() != set.k() {
            return Err(Error::LengthMismatch {
                id: p.instance_id().to_string(),
                expected: set.k(),
                found: p.probs().len(),
            });
        }
        pairs.push((p.probs(), set.gold_index));
    }
    let n = pairs.len() as f64;
    let acc = pairs.iter().map(|(p, g)| f64::from(recall_at_1(p, *g))).sum::<f64>() / n;
    let brier_mean = pairs.iter().map(|(p, g)| brier(p, *g)).sum::<f64>() / n;
    let ece = match mode {
        EceMode::Top1 => ece(&pairs, binning)?,
        EceMode::PerCandidate => ece_per_candidate(&pairs, binning)?,
    };
    Ok(MetricsRow {
        method: method.to_string(),
        shift_tag: shift_tag.to_string(),
        n: pairs.len(),
        acc,
        brier: brier_mean,
        ece,
    })
}

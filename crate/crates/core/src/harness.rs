//! Candidate scoring, softmax predictions, and multi-pass / ensemble
//! aggregation, plus the predictions file format used to exchange logits with
//! external rankers.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::corpus::{CandidateSet, Utterance};
use crate::error::{Error, Result};
use crate::io;
use crate::metrics::Probabilities;
use crate::seed::derive_seed;

pub const DEFAULT_PASSES: usize = 5;
pub const DEFAULT_MEMBERS: usize = 5;

/// Scores one (context, candidate) pair. `noise_seed` is fixed per pass and
/// candidate; deterministic scorers ignore it.
pub trait Scorer {
    fn score(&self, context: &[Utterance], candidate: &Utterance, noise_seed: u64) -> f64;

    /// Scores a whole candidate list; `noise_seeds[i]` belongs to
    /// `candidates[i]`. Override when per-context work can be shared.
    fn score_candidates(&self, context: &[Utterance], candidates: &[Utterance], noise_seeds: &[u64]) -> Vec<f64> {
        candidates
            .iter()
            .zip(noise_seeds)
            .map(|(c, &s)| self.score(context, c, s))
            .collect()
    }

    fn is_stochastic(&self) -> bool {
        false
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector {
    pub instance_id: String,
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
}

impl ScoreVector {
    pub fn from_logits(instance_id: impl Into<String>, logits: Vec<f64>) -> Result<Self> {
        let instance_id = instance_id.into();
        if let Some(index) = logits.iter().position(|z| !z.is_finite()) {
            return Err(Error::NonFinite {
                instance: instance_id,
                index,
            });
        }
        if logits.is_empty() {
            return Err(Error::Empty("logits"));
        }
        let probs = softmax(&logits);
        Ok(Self {
            instance_id,
            logits,
            probs,
        })
    }
}

impl Probabilities for ScoreVector {
    fn instance_id(&self) -> &str {
        &self.instance_id
    }

    fn probs(&self) -> &[f64] {
        &self.probs
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregatedPrediction {
    pub instance_id: String,
    pub mean_probs: Vec<f64>,
    pub var_probs: Vec<f64>,
    pub n_members: usize,
}

impl Probabilities for AggregatedPrediction {
    fn instance_id(&self) -> &str {
        &self.instance_id
    }

    fn probs(&self) -> &[f64] {
        &self.mean_probs
    }
}

/// Elementwise mean and population variance, accumulated with Welford's
/// update so identical members reproduce their probabilities bit for bit.
pub fn aggregate_probs<'a>(
    instance_id: &str,
    members: impl IntoIterator<Item = &'a [f64]>,
) -> Result<AggregatedPrediction> {
    let mut mean: Vec<f64> = Vec::new();
    let mut m2: Vec<f64> = Vec::new();
    let mut n = 0usize;
    for probs in members {
        if n == 0 {
            mean = vec![0.0; probs.len()];
            m2 = vec![0.0; probs.len()];
        } else if probs.len() != mean.len() {
            return Err(Error::LengthMismatch {
                id: instance_id.to_string(),
                expected: mean.len(),
                found: probs.len(),
            });
        }
        n += 1;
        for (i, &p) in probs.iter().enumerate() {
            let delta = p - mean[i];
            mean[i] += delta / n as f64;
            m2[i] += delta * (p - mean[i]);
        }
    }
    if n == 0 {
        return Err(Error::Empty("aggregation members"));
    }
    Ok(AggregatedPrediction {
        instance_id: instance_id.to_string(),
        mean_probs: mean,
        var_probs: m2.into_iter().map(|v| (v / n as f64).max(0.0)).collect(),
        n_members: n,
    })
}

pub fn predict_probs_with_seed(
    scorer: &dyn Scorer,
    candidate_set: &CandidateSet,
    context: &[Utterance],
    pass_seed: u64,
) -> Result<ScoreVector> {
    let seeds: Vec<u64> = (0..candidate_set.k())
        .map(|i| derive_seed(pass_seed, "candidate", "", i as u64))
        .collect();
    let logits = scorer.score_candidates(context, &candidate_set.candidates, &seeds);
    ScoreVector::from_logits(candidate_set.instance_id.clone(), logits)
}

pub fn predict_probs(
    scorer: &dyn Scorer,
    candidate_set: &CandidateSet,
    context: &[Utterance],
) -> Result<ScoreVector> {
    predict_probs_with_seed(scorer, candidate_set, context, 0)
}

pub fn pass_seed(seed: u64, instance_id: &str, pass: usize) -> u64 {
    derive_seed(seed, "pass", instance_id, pass as u64)
}

/// Single-pass predictions of `n_passes` stochastic forward passes, one per
/// pass index.
pub fn mc_passes(
    scorer: &dyn Scorer,
    candidate_set: &CandidateSet,
    context: &[Utterance],
    n_passes: usize,
    seed: u64,
) -> Result<Vec<ScoreVector>> {
    if n_passes < 1 {
        return Err(Error::InvalidArgument("need at least one pass".into()));
    }
    (0..n_passes)
        .map(|p| {
            let s = pass_seed(seed, &candidate_set.instance_id, p);
            predict_probs_with_seed(scorer, candidate_set, context, s)
        })
        .collect()
}

pub fn mc_aggregate(
    scorer: &dyn Scorer,
    candidate_set: &CandidateSet,
    context: &[Utterance],
    n_passes: usize,
    seed: u64,
) -> Result<AggregatedPrediction> {
    let passes = mc_passes(scorer, candidate_set, context, n_passes, seed)?;
    aggregate_probs(&candidate_set.instance_id, passes.iter().map(|p| p.probs.as_slice()))
}

pub fn ensemble_aggregate(
    members: &[&dyn Scorer],
    candidate_set: &CandidateSet,
    context: &[Utterance],
) -> Result<AggregatedPrediction> {
    if members.is_empty() {
        return Err(Error::InvalidArgument("ensemble needs at least one member".into()));
    }
    let preds = members
        .iter()
        .map(|m| predict_probs(*m, candidate_set, context))
        .collect::<Result<Vec<_>>>()?;
    aggregate_probs(&candidate_set.instance_id, preds.iter().map(|p| p.probs.as_slice()))
}

fn distinct_tokens(utts: &[Utterance]) -> HashSet<&str> {
    utts.iter()
        .flat_map(|u| u.tokens().iter().map(String::as_str))
        .collect()
}

/// Fraction of distinct candidate tokens that also occur in the context:
/// `|ctx ∩ cand| / (1 + |cand|)`, times `scale`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OverlapScorer {
    pub scale: f64,
}

impl OverlapScorer {
    pub fn overlap(context: &[Utterance], candidate: &Utterance) -> f64 {
        overlap_with(&distinct_tokens(context), candidate)
    }
}

fn overlap_with(ctx: &HashSet<&str>, candidate: &Utterance) -> f64 {
    let cand = distinct_tokens(std::slice::from_ref(candidate));
    let shared = cand.iter().filter(|t| ctx.contains(*t)).count();
    shared as f64 / (1.0 + cand.len() as f64)
}

impl Default for OverlapScorer {
    fn default() -> Self {
        Self { scale: 1.0 }
    }
}

impl Scorer for OverlapScorer {
    fn score(&self, context: &[Utterance], candidate: &Utterance, _noise_seed: u64) -> f64 {
        self.scale * Self::overlap(context, candidate)
    }

    fn score_candidates(&self, context: &[Utterance], candidates: &[Utterance], _noise_seeds: &[u64]) -> Vec<f64> {
        let ctx = distinct_tokens(context);
        candidates.iter().map(|c| self.scale * overlap_with(&ctx, c)).collect()
    }
}

pub fn toy_overlap_scorer() -> OverlapScorer {
    OverlapScorer::default()
}

/// Overlap score plus Gaussian noise drawn fresh on every pass, standing in
/// for test-time dropout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoisyScorer {
    pub base: OverlapScorer,
    pub sigma: f64,
}

impl Scorer for NoisyScorer {
    fn score(&self, context: &[Utterance], candidate: &Utterance, noise_seed: u64) -> f64 {
        let base = self.base.score(context, candidate, noise_seed);
        if self.sigma == 0.0 {
            return base;
        }
        let normal = Normal::new(0.0, self.sigma).expect("finite sigma");
        base + normal.sample(&mut ChaCha8Rng::seed_from_u64(noise_seed))
    }

    fn score_candidates(&self, context: &[Utterance], candidates: &[Utterance], noise_seeds: &[u64]) -> Vec<f64> {
        let base = self.base.score_candidates(context, candidates, noise_seeds);
        if self.sigma == 0.0 {
            return base;
        }
        let normal = Normal::new(0.0, self.sigma).expect("finite sigma");
        base.into_iter()
            .zip(noise_seeds)
            .map(|(b, &s)| b + normal.sample(&mut ChaCha8Rng::seed_from_u64(s)))
            .collect()
    }

    fn is_stochastic(&self) -> bool {
        self.sigma != 0.0
    }
}

/// Overlap score with a fixed, member-specific perturbation of every
/// (context, candidate) pair: a deterministic stand-in for one independently
/// trained ensemble member.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbedScorer {
    pub base: OverlapScorer,
    pub member: u64,
    pub sigma: f64,
}

impl PerturbedScorer {
    fn context_key(context: &[Utterance]) -> String {
        let mut key = String::new();
        for u in context {
            key.push_str(u.text());
            key.push('\u{1}');
        }
        key
    }

    fn perturbation(&self, context_key: &str, candidate: &Utterance) -> f64 {
        if self.sigma == 0.0 {
            return 0.0;
        }
        let seed = derive_seed(self.member, context_key, candidate.text(), 0);
        let normal = Normal::new(0.0, self.sigma).expect("finite sigma");
        normal.sample(&mut ChaCha8Rng::seed_from_u64(seed))
    }
}

impl Scorer for PerturbedScorer {
    fn score(&self, context: &[Utterance], candidate: &Utterance, _noise_seed: u64) -> f64 {
        self.base.score(context, candidate, 0) + self.perturbation(&Self::context_key(context), candidate)
    }

    fn score_candidates(&self, context: &[Utterance], candidates: &[Utterance], noise_seeds: &[u64]) -> Vec<f64> {
        let key = Self::context_key(context);
        self.base
            .score_candidates(context, candidates, noise_seeds)
            .into_iter()
            .zip(candidates)
            .map(|(b, c)| b + self.perturbation(&key, c))
            .collect()
    }
}

/// One line of a predictions file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub instance_id: String,
    pub logits: Vec<f64>,
    pub method: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub member: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pass: Option<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub method: String,
    pub member: Option<u32>,
    pub pass: Option<u32>,
    pub vector: ScoreVector,
}

impl Prediction {
    pub fn to_record(&self) -> PredictionRecord {
        PredictionRecord {
            instance_id: self.vector.instance_id.clone(),
            logits: self.vector.logits.clone(),
            method: self.method.clone(),
            member: self.member,
            pass: self.pass,
        }
    }
}

/// Probabilities are recomputed from logits; a record repeating
/// (method, instance, member, pass) is rejected.
pub fn predictions_from_records(records: Vec<PredictionRecord>) -> Result<Vec<Prediction>> {
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(records.len());
    for r in records {
        let key = (r.method.clone(), r.instance_id.clone(), r.member, r.pass);
        if !seen.insert(key) {
            return Err(Error::DuplicateId(r.instance_id));
        }
        out.push(Prediction {
            method: r.method,
            member: r.member,
            pass: r.pass,
            vector: ScoreVector::from_logits(r.instance_id, r.logits)?,
        });
    }
    Ok(out)
}

pub fn load_predictions(path: &Path) -> Result<Vec<Prediction>> {
    predictions_from_records(io::read_jsonl(path)?)
}

/// Every prediction must reference a known candidate set and carry one logit
/// per candidate.
pub fn check_against_candidates(predictions: &[Prediction], sets: &[CandidateSet]) -> Result<()> {
    let k: HashMap<&str, usize> = sets.iter().map(|s| (s.instance_id.as_str(), s.k())).collect();
    let mut unknown = Vec::new();
    for p in predictions {
        match k.get(p.vector.instance_id.as_str()) {
            None => unknown.push(p.vector.instance_id.clone()),
            Some(&k) if k != p.vector.logits.len() => {
                return Err(Error::LengthMismatch {
                    id: p.vector.instance_id.clone(),
                    expected: k,
                    found: p.vector.logits.len(),
                })
            }
            Some(_) => {}
        }
    }
    if unknown.is_empty() {
        Ok(())
    } else {
        unknown.sort();
        unknown.dedup();
        Err(Error::UnknownIds(unknown))
    }
}

/// Groups predictions by method (in order of first appearance) and averages
/// the passes / members recorded for each instance.
pub fn aggregate_by_method(predictions: &[Prediction]) -> Result<Vec<(String, Vec<AggregatedPrediction>)>> {
    let mut methods: Vec<String> = Vec::new();
    // method -> (instance order, instance -> member probabilities)
    type Group<'a> = (Vec<&'a str>, HashMap<&'a str, Vec<&'a [f64]>>);
    let mut grouped: BTreeMap<&str, Group> = BTreeMap::new();
    for p in predictions {
        if !grouped.contains_key(p.method.as_str()) {
            methods.push(p.method.clone());
        }
        let (order, by_id) = grouped.entry(p.method.as_str()).or_default();
        let id = p.vector.instance_id.as_str();
        by_id
            .entry(id)
            .or_insert_with(|| {
                order.push(id);
                Vec::new()
            })
            .push(&p.vector.probs);
    }
    methods
        .into_iter()
        .map(|m| {
            let (order, by_id) = &grouped[m.as_str()];
            let aggs = order
                .iter()
                .map(|id| aggregate_probs(id, by_id[id].iter().copied()))
                .collect::<Result<Vec<_>>>()?;
            Ok((m, aggs))
        })
        .collect()
}

//! End-to-end scoring and evaluation: the toy scorer suite that produces a
//! predictions file, and the per-method evaluation behind `eval`.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::calibration::{apply_temperature, fit_temperature, Temperature};
use crate::corpus::{check_unique_ids, CandidateSet, Instance};
use crate::error::{Error, Result};
use crate::harness::{
    aggregate_by_method, check_against_candidates, mc_passes, predict_probs, NoisyScorer, OverlapScorer,
    PerturbedScorer, Prediction, ScoreVector, DEFAULT_MEMBERS, DEFAULT_PASSES,
};
use crate::metrics::{evaluate, EceBinning, EceMode, MetricsRow};
use crate::seed::derive_seed;

pub const VANILLA: &str = "vanilla";
pub const TEMP_SCALING: &str = "temp_scaling";
pub const DROPOUT: &str = "dropout";
pub const ENSEMBLE: &str = "ensemble";

/// Settings of the built-in overlap scorers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToySuiteConfig {
    /// Logit scale applied to the overlap fraction.
    pub scale: f64,
    pub dropout_sigma: f64,
    pub member_sigma: f64,
    pub passes: usize,
    pub members: usize,
    pub seed: u64,
}

impl Default for ToySuiteConfig {
    fn default() -> Self {
        Self {
            scale: 10.0,
            dropout_sigma: 0.8,
            member_sigma: 1.0,
            passes: DEFAULT_PASSES,
            members: DEFAULT_MEMBERS,
            seed: 0,
        }
    }
}

impl ToySuiteConfig {
    fn validate(&self) -> Result<()> {
        if !(self.scale.is_finite() && self.scale > 0.0) {
            return Err(Error::InvalidArgument(format!("scale must be positive, got {}", self.scale)));
        }
        for (name, s) in [("dropout", self.dropout_sigma), ("member", self.member_sigma)] {
            if !(s.is_finite() && s >= 0.0) {
                return Err(Error::InvalidArgument(format!("{name} sigma must be >= 0, got {s}")));
            }
        }
        if self.passes < 1 || self.members < 1 {
            return Err(Error::InvalidArgument("passes and members must be at least 1".into()));
        }
        Ok(())
    }

    pub fn vanilla(&self) -> OverlapScorer {
        OverlapScorer { scale: self.scale }
    }

    pub fn dropout(&self) -> NoisyScorer {
        NoisyScorer {
            base: self.vanilla(),
            sigma: self.dropout_sigma,
        }
    }

    pub fn member(&self, m: usize) -> PerturbedScorer {
        PerturbedScorer {
            base: self.vanilla(),
            member: derive_seed(self.seed, "member", "", m as u64),
            sigma: self.member_sigma,
        }
    }
}

/// Scores every instance against its candidate set: one vanilla record, one
/// dropout record per pass, one ensemble record per member.
pub fn score_dataset(
    instances: &[Instance],
    sets: &[CandidateSet],
    cfg: &ToySuiteConfig,
) -> Result<Vec<Prediction>> {
    cfg.validate()?;
    check_unique_ids(instances.iter().map(|i| i.id.as_str()))?;
    let by_id: HashMap<&str, &CandidateSet> = sets.iter().map(|s| (s.instance_id.as_str(), s)).collect();
    let missing: Vec<String> = instances
        .iter()
        .filter(|i| !by_id.contains_key(i.id.as_str()))
        .map(|i| i.id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(Error::UnknownIds(missing));
    }

    let vanilla = cfg.vanilla();
    let dropout = cfg.dropout();
    let members: Vec<PerturbedScorer> = (0..cfg.members).map(|m| cfg.member(m)).collect();
    let dropout_seed = derive_seed(cfg.seed, "dropout", "", 0);
    let mut out = Vec::with_capacity(instances.len() * (1 + cfg.passes + cfg.members));
    for inst in instances {
        let set = by_id[inst.id.as_str()];
        out.push(Prediction {
            method: VANILLA.into(),
            member: None,
            pass: None,
            vector: predict_probs(&vanilla, set, &inst.context)?,
        });
        for (p, vector) in mc_passes(&dropout, set, &inst.context, cfg.passes, dropout_seed)?
            .into_iter()
            .enumerate()
        {
            out.push(Prediction {
                method: DROPOUT.into(),
                member: None,
                pass: Some(p as u32),
                vector,
            });
        }
        for (m, scorer) in members.iter().enumerate() {
            out.push(Prediction {
                method: ENSEMBLE.into(),
                member: Some(m as u32),
                pass: None,
                vector: predict_probs(scorer, set, &inst.context)?,
            });
        }
    }
    Ok(out)
}

fn gold_indices(vectors: &[&ScoreVector], sets: &[CandidateSet]) -> Result<Vec<usize>> {
    let gold: HashMap<&str, usize> = sets.iter().map(|s| (s.instance_id.as_str(), s.gold_index)).collect();
    let mut unknown = Vec::new();
    let out = vectors
        .iter()
        .map(|v| match gold.get(v.instance_id.as_str()) {
            Some(&g) => g,
            None => {
                unknown.push(v.instance_id.clone());
                0
            }
        })
        .collect();
    if unknown.is_empty() {
        Ok(out)
    } else {
        unknown.sort();
        Err(Error::UnknownIds(unknown))
    }
}

/// Fits a temperature on the single-record predictions of `method`.
pub fn fit_temperature_for(predictions: &[Prediction], sets: &[CandidateSet], method: &str) -> Result<Temperature> {
    let vectors: Vec<&ScoreVector> = predictions
        .iter()
        .filter(|p| p.method == method)
        .map(|p| &p.vector)
        .collect();
    if vectors.is_empty() {
        return Err(Error::InvalidArgument(format!("no `{method}` predictions to fit a temperature on")));
    }
    check_unique_ids(vectors.iter().map(|v| v.instance_id.as_str()))?;
    check_against_candidates(predictions, sets)?;
    let gold = gold_indices(&vectors, sets)?;
    let owned: Vec<ScoreVector> = vectors.into_iter().cloned().collect();
    fit_temperature(&owned, &gold)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    pub shift_tag: String,
    /// When set, vanilla logits are rescaled and reported as an extra
    /// `temp_scaling` row.
    pub temperature: Option<f64>,
    pub binning: EceBinning,
    pub mode: EceMode,
    /// Ids every method must cover; defaults to all candidate sets.
    pub expected_ids: Option<Vec<String>>,
}

impl EvalOptions {
    pub fn new(shift_tag: impl Into<String>) -> Self {
        Self {
            shift_tag: shift_tag.into(),
            temperature: None,
            binning: EceBinning::default(),
            mode: EceMode::Top1,
            expected_ids: None,
        }
    }
}

/// One row per method, in order of first appearance, with the
/// temperature-scaled row right after vanilla.
pub fn evaluate_predictions(
    predictions: &[Prediction],
    sets: &[CandidateSet],
    opts: &EvalOptions,
) -> Result<Vec<MetricsRow>> {
    if predictions.is_empty() {
        return Err(Error::Empty("predictions"));
    }
    check_against_candidates(predictions, sets)?;
    let expected: BTreeSet<&str> = match &opts.expected_ids {
        Some(ids) => ids.iter().map(String::as_str).collect(),
        None => sets.iter().map(|s| s.instance_id.as_str()).collect(),
    };

    let mut grouped = aggregate_by_method(predictions)?;
    if let Some(t) = opts.temperature {
        let pos = grouped
            .iter()
            .position(|(m, _)| m == VANILLA)
            .ok_or_else(|| Error::InvalidArgument("a temperature needs `vanilla` predictions".into()))?;
        let scaled = predictions
            .iter()
            .filter(|p| p.method == VANILLA)
            .map(|p| {
                Ok(Prediction {
                    method: TEMP_SCALING.into(),
                    vector: apply_temperature(&p.vector, t)?,
                    ..p.clone()
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let agg = aggregate_by_method(&scaled)?.remove(0);
        grouped.insert(pos + 1, agg);
    }

    let mut missing = BTreeSet::new();
    for (_, preds) in &grouped {
        let have: BTreeSet<&str> = preds.iter().map(|p| p.instance_id.as_str()).collect();
        missing.extend(expected.difference(&have).map(|s| s.to_string()));
    }
    if !missing.is_empty() {
        return Err(Error::MissingIds(missing.into_iter().collect()));
    }

    grouped
        .iter()
        .map(|(method, preds)| {
            let kept: Vec<_> = preds
                .iter()
                .filter(|p| expected.contains(p.instance_id.as_str()))
                .cloned()
                .collect();
            evaluate(&kept, sets, method, &opts.shift_tag, opts.binning, opts.mode)
        })
        .collect()
}

/// Rows for each member of `method` scored on its own, method named
/// `"{method}/{member}"`.
pub fn member_rows(
    predictions: &[Prediction],
    sets: &[CandidateSet],
    method: &str,
    opts: &EvalOptions,
) -> Result<Vec<MetricsRow>> {
    let mut by_member: Vec<(u32, Vec<ScoreVector>)> = Vec::new();
    for p in predictions.iter().filter(|p| p.method == method) {
        let m = p.member.unwrap_or(0);
        match by_member.iter_mut().find(|(k, _)| *k == m) {
            Some((_, v)) => v.push(p.vector.clone()),
            None => by_member.push((m, vec![p.vector.clone()])),
        }
    }
    by_member.sort_by_key(|(m, _)| *m);
    by_member
        .iter()
        .map(|(m, vectors)| {
            evaluate(vectors, sets, &format!("{method}/{m}"), &opts.shift_tag, opts.binning, opts.mode)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_candidate_sets, expand_instances};
    use crate::synth::{generate, SynthConfig};

    fn fixture() -> (Vec<Instance>, Vec<CandidateSet>) {
        let c = generate(&SynthConfig {
            train_dialogues: 10,
            dev_dialogues: 5,
            test_dialogues: 20,
            ..SynthConfig::default()
        });
        let inst = expand_instances(&c.test).unwrap();
        let sets = build_candidate_sets(&inst, 10, 3).unwrap();
        (inst, sets)
    }

    #[test]
    fn record_layout() {
        let (inst, sets) = fixture();
        let cfg = ToySuiteConfig::default();
        let preds = score_dataset(&inst, &sets, &cfg).unwrap();
        assert_eq!(preds.len(), inst.len() * (1 + cfg.passes + cfg.members));
        let dropout: Vec<_> = preds.iter().filter(|p| p.method == DROPOUT).collect();
        assert!(dropout.iter().all(|p| p.pass.is_some() && p.member.is_none()));
        let ens: Vec<_> = preds.iter().filter(|p| p.method == ENSEMBLE).collect();
        assert!(ens.iter().all(|p| p.member.is_some() && p.pass.is_none()));
        assert_eq!(preds, score_dataset(&inst, &sets, &cfg).unwrap());
    }

    #[test]
    fn rows_per_method_with_temperature() {
        let (inst, sets) = fixture();
        let preds = score_dataset(&inst, &sets, &ToySuiteConfig::default()).unwrap();
        let mut opts = EvalOptions::new("source");
        opts.temperature = Some(2.0);
        let rows = evaluate_predictions(&preds, &sets, &opts).unwrap();
        let names: Vec<&str> = rows.iter().map(|r| r.method.as_str()).collect();
        assert_eq!(names, [VANILLA, TEMP_SCALING, DROPOUT, ENSEMBLE]);
        assert_eq!(rows[0].acc, rows[1].acc);
        assert!(rows.iter().all(|r| r.n == inst.len()));
    }

    #[test]
    fn missing_record_is_named() {
        let (inst, sets) = fixture();
        let mut preds = score_dataset(&inst[..20], &sets, &ToySuiteConfig::default()).unwrap();
        preds.retain(|p| !(p.method == VANILLA && p.vector.instance_id == inst[7].id));
        let mut opts = EvalOptions::new("source");
        opts.expected_ids = Some(inst[..20].iter().map(|i| i.id.clone()).collect());
        match evaluate_predictions(&preds, &sets, &opts) {
            Err(Error::MissingIds(ids)) => assert_eq!(ids, vec![inst[7].id.clone()]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_instance_rejected() {
        let (inst, sets) = fixture();
        let err = score_dataset(&inst, &sets[1..], &ToySuiteConfig::default()).unwrap_err();
        assert!(matches!(err, Error::UnknownIds(ids) if ids == vec![sets[0].instance_id.clone()]));
    }

    #[test]
    fn fitted_temperature_not_worse_than_one() {
        let (inst, sets) = fixture();
        let preds = score_dataset(&inst, &sets, &ToySuiteConfig::default()).unwrap();
        let t = fit_temperature_for(&preds, &sets, VANILLA).unwrap();
        let vanilla: Vec<ScoreVector> = preds.iter().filter(|p| p.method == VANILLA).map(|p| p.vector.clone()).collect();
        let gold: Vec<usize> = sets.iter().map(|s| s.gold_index).collect();
        assert!(t.nll_at_fit <= crate::calibration::mean_nll(&vanilla, &gold, 1.0) + 1e-12);
        assert!(fit_temperature_for(&preds, &sets, DROPOUT).is_err());
    }

    #[test]
    fn member_rows_one_per_member() {
        let (inst, sets) = fixture();
        let preds = score_dataset(&inst, &sets, &ToySuiteConfig::default()).unwrap();
        let rows = member_rows(&preds, &sets, ENSEMBLE, &EvalOptions::new("source")).unwrap();
        assert_eq!(rows.len(), 5);
        assert_eq!(rows[4].method, "ensemble/4");
    }
}

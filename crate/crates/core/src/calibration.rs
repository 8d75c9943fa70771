//! Post-hoc temperature scaling.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::ScoreVector;

pub const T_MIN: f64 = 0.05;
pub const T_MAX: f64 = 10.0;
pub const T_TOL: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Temperature {
    pub value: f64,
    pub nll_at_fit: f64,
    pub fit_iterations: usize,
}

/// On-disk form: `{"temperature": T, "nll": nll}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemperatureRecord {
    pub temperature: f64,
    pub nll: f64,
}

impl From<Temperature> for TemperatureRecord {
    fn from(t: Temperature) -> Self {
        Self {
            temperature: t.value,
            nll: t.nll_at_fit,
        }
    }
}

fn log_softmax_at(logits: &[f64], t: f64, idx: usize) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max) / t;
    let lse = logits.iter().map(|z| (z / t - max).exp()).sum::<f64>().ln() + max;
    logits[idx] / t - lse
}

/// Mean negative log-likelihood of the gold candidates at temperature `t`.
pub fn mean_nll(predictions: &[ScoreVector], gold: &[usize], t: f64) -> f64 {
    let total: f64 = predictions
        .iter()
        .zip(gold)
        .map(|(p, &g)| -log_softmax_at(&p.logits, t, g))
        .sum();
    total / predictions.len() as f64
}

fn validate(predictions: &[ScoreVector], gold: &[usize]) -> Result<()> {
    if predictions.is_empty() {
        return Err(Error::Empty("predictions for temperature fitting"));
    }
    if predictions.len() != gold.len() {
        return Err(Error::InvalidArgument(format!(
            "{} predictions but {} gold indices",
            predictions.len(),
            gold.len()
        )));
    }
    for (p, &g) in predictions.iter().zip(gold) {
        if g >= p.logits.len() {
            return Err(Error::InvalidArgument(format!(
                "`{}`: gold index {g} out of range for {} candidates",
                p.instance_id,
                p.logits.len()
            )));
        }
    }
    Ok(())
}

/// Golden-section search for the NLL-minimizing temperature on
/// `[T_MIN, T_MAX]`. The bounds themselves are also compared so a monotone
/// objective returns the exact bound.
pub fn fit_temperature(predictions: &[ScoreVector], gold: &[usize]) -> Result<Temperature> {
    validate(predictions, gold)?;
    let f = |t: f64| mean_nll(predictions, gold, t);
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (T_MIN, T_MAX);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    let mut iterations = 0;
    while b - a > T_TOL {
        iterations += 1;
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let mid = (a + b) / 2.0;
    let (value, nll_at_fit) = [(mid, f(mid)), (T_MIN, f(T_MIN)), (T_MAX, f(T_MAX))]
        .into_iter()
        .fold((f64::NAN, f64::INFINITY), |best, cand| if cand.1 < best.1 { cand } else { best });
    if !nll_at_fit.is_finite() {
        return Err(Error::InvalidArgument("NLL is not finite at any temperature".into()));
    }
    Ok(Temperature {
        value,
        nll_at_fit,
        fit_iterations: iterations,
    })
}

pub fn apply_temperature(score_vector: &ScoreVector, t: f64) -> Result<ScoreVector> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::InvalidArgument(format!("temperature must be > 0, got {t}")));
    }
    let logits = score_vector.logits.iter().map(|z| z / t).collect();
    ScoreVector::from_logits(score_vector.instance_id.clone(), logits)
}

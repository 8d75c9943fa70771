//! Sentence-level corruption: delete the earliest context utterances.

use std::fmt;
use std::str::FromStr;

use crate::corpus::{filter_by_context_length, Instance};
use crate::error::{Error, Result};

/// Deletion ratio as an exact fraction `num/den`, `0 <= num/den < 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DeletionRatio {
    num: usize,
    den: usize,
}

impl DeletionRatio {
    pub fn new(num: usize, den: usize) -> Result<Self> {
        if den == 0 || num >= den {
            return Err(Error::InvalidArgument(format!(
                "deletion ratio must satisfy 0 <= {num}/{den} < 1"
            )));
        }
        Ok(Self { num, den })
    }

    pub fn zero() -> Self {
        Self { num: 0, den: 1 }
    }

    /// Utterances to delete from a context of length `n`; the ratio must be
    /// an exact multiple of `1/n`.
    pub fn delete_count(&self, n: usize) -> Result<usize> {
        if !(self.num * n).is_multiple_of(self.den) {
            return Err(Error::InvalidArgument(format!(
                "ratio {self} is not k/{n} for integer k"
            )));
        }
        Ok(self.num * n / self.den)
    }
}

impl fmt::Display for DeletionRatio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

impl FromStr for DeletionRatio {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("expected a fraction like 2/6, got `{s}`"));
        match s.split_once('/') {
            Some((a, b)) => {
                let num = a.trim().parse().map_err(|_| bad())?;
                let den = b.trim().parse().map_err(|_| bad())?;
                DeletionRatio::new(num, den)
            }
            None if s.trim() == "0" => Ok(DeletionRatio::zero()),
            None => Err(bad()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IcConfig {
    pub ratio: DeletionRatio,
    /// Unused by deletion; carried so every shift config has a seed.
    pub seed: u64,
}

pub fn apply_ic(instance: &Instance, delete_count: usize) -> Result<Instance> {
    if delete_count >= instance.context.len() {
        return Err(Error::InvalidArgument(format!(
            "`{}`: cannot delete {delete_count} of {} context utterances",
            instance.id,
            instance.context.len()
        )));
    }
    let mut out = instance.clone();
    out.context.drain(..delete_count);
    out.provenance.deleted_count = instance.provenance.deleted_count + delete_count;
    Ok(out)
}

/// Requires a shared context length `n` across `instances` (filter first);
/// deletes `ratio * n` leading utterances from each.
pub fn shift_dataset_ic(instances: &[Instance], ratio: DeletionRatio) -> Result<Vec<Instance>> {
    let Some(first) = instances.first() else {
        return Ok(Vec::new());
    };
    let n = first.context.len();
    if let Some(other) = instances.iter().find(|i| i.context.len() != n) {
        return Err(Error::InvalidArgument(format!(
            "mixed context lengths ({n} and {}); filter to one length first",
            other.context.len()
        )));
    }
    let k = ratio.delete_count(n)?;
    let tag = format!("ic:r={k}/{n}");
    instances
        .iter()
        .map(|i| {
            let mut out = apply_ic(i, k)?;
            out.provenance.shift_tag = tag.clone();
            Ok(out)
        })
        .collect()
}

/// Genuine instances whose context has exactly `turns` utterances.
pub fn build_sr_sets(instances: &[Instance], turns: usize) -> Result<Vec<Instance>> {
    let mut out = filter_by_context_length(instances, turns)?;
    for i in &mut out {
        i.provenance.shift_tag = format!("sr:t={turns}");
    }
    Ok(out)
}

//! The bundled desk-scale experiment: synthetic corpus, toy scorers, fallback
//! importance, every shift family, one metrics table per family.

use serde::{Deserialize, Serialize};

use crate::calibration::TemperatureRecord;
use crate::corpus::{build_candidate_sets, expand_instances, filter_by_context_length, CandidateSet, Instance, SOURCE_TAG};
use crate::error::Result;
use crate::importance::ImportanceMap;
use crate::lexicon::{build_vocab_stats, ReplacementMode, SynonymLexicon, VocabStats};
use crate::metrics::{EceBinning, EceMode, MetricsRow};
use crate::pipeline::{
    evaluate_predictions, fit_temperature_for, member_rows, score_dataset, EvalOptions, ToySuiteConfig, ENSEMBLE,
    VANILLA,
};
use crate::shift_ic::{build_sr_sets, shift_dataset_ic, DeletionRatio};
use crate::shift_uw::{shift_dataset_uw, shift_dataset_uw_buckets_intersected, ShiftStats, UwConfig};
use crate::synth::{generate, SynthConfig};

pub const UW_RATIOS: [f64; 10] = [0.05, 0.10, 0.15, 0.20, 0.25, 0.30, 0.35, 0.40, 0.45, 0.50];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoConfig {
    pub synth: SynthConfig,
    pub suite: ToySuiteConfig,
    pub k: usize,
    pub known_threshold: u64,
    pub seed: u64,
    /// Context length the IC family is run on.
    pub ic_turns: usize,
    pub ece_bins: usize,
}

impl Default for DemoConfig {
    fn default() -> Self {
        Self {
            synth: SynthConfig::default(),
            suite: ToySuiteConfig::default(),
            k: 10,
            known_threshold: 200,
            seed: 1,
            ic_turns: 6,
            ece_bins: 10,
        }
    }
}

impl DemoConfig {
    /// A smaller corpus for interactive use.
    pub fn quick() -> Self {
        let mut c = Self::default();
        c.synth.train_dialogues = 300;
        c.synth.dev_dialogues = 60;
        c.synth.test_dialogues = 120;
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoLevel {
    pub shift_tag: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stats: Option<ShiftStats>,
    pub rows: Vec<MetricsRow>,
    pub members: Vec<MetricsRow>,
}

impl DemoLevel {
    pub fn row(&self, method: &str) -> Option<&MetricsRow> {
        self.rows.iter().find(|r| r.method == method)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoFamily {
    /// `uw`, `kw`, `uw-bucket`, `ic` or `sr`.
    pub name: String,
    pub levels: Vec<DemoLevel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoReport {
    pub temperature: TemperatureRecord,
    pub dev: Vec<MetricsRow>,
    pub source: DemoLevel,
    pub families: Vec<DemoFamily>,
}

impl DemoReport {
    pub fn family(&self, name: &str) -> Option<&DemoFamily> {
        self.families.iter().find(|f| f.name == name)
    }

    /// Every metrics row, dev and source first.
    pub fn all_rows(&self) -> Vec<MetricsRow> {
        let mut rows = self.dev.clone();
        rows.extend(self.source.rows.iter().cloned());
        for f in &self.families {
            for l in &f.levels {
                rows.extend(l.rows.iter().cloned());
            }
        }
        rows
    }
}

struct Ctx<'a> {
    sets: &'a [CandidateSet],
    suite: &'a ToySuiteConfig,
    temperature: f64,
    binning: EceBinning,
}

impl Ctx<'_> {
    fn level(&self, instances: &[Instance], tag: String, stats: Option<ShiftStats>) -> Result<DemoLevel> {
        let preds = score_dataset(instances, self.sets, self.suite)?;
        let mut opts = EvalOptions::new(tag.clone());
        opts.temperature = Some(self.temperature);
        opts.binning = self.binning;
        opts.mode = EceMode::Top1;
        opts.expected_ids = Some(instances.iter().map(|i| i.id.clone()).collect());
        Ok(DemoLevel {
            rows: evaluate_predictions(&preds, self.sets, &opts)?,
            members: member_rows(&preds, self.sets, ENSEMBLE, &opts)?,
            shift_tag: tag,
            stats,
        })
    }
}

fn uw_family(
    name: &str,
    mode: ReplacementMode,
    test: &[Instance],
    lexicon: &SynonymLexicon,
    stats: &VocabStats,
    cfg: &DemoConfig,
    ctx: &Ctx,
) -> Result<DemoFamily> {
    let levels = UW_RATIOS
        .iter()
        .map(|&r| {
            let uw = UwConfig::with_ratio(mode, r, cfg.seed)?;
            let (shifted, st) = shift_dataset_uw(test, &uw, lexicon, stats, None)?;
            ctx.level(&shifted, uw.shift_tag(), Some(st))
        })
        .collect::<Result<_>>()?;
    Ok(DemoFamily {
        name: name.into(),
        levels,
    })
}

pub fn run_demo(cfg: &DemoConfig) -> Result<DemoReport> {
    let corpus = generate(&cfg.synth);
    let stats = build_vocab_stats(&corpus.train);
    let dev = expand_instances(&corpus.dev)?;
    let test = expand_instances(&corpus.test)?;
    let dev_sets = build_candidate_sets(&dev, cfg.k, cfg.seed)?;
    let sets = build_candidate_sets(&test, cfg.k, cfg.seed)?;
    let binning = EceBinning::new(cfg.ece_bins)?;

    let dev_preds = score_dataset(&dev, &dev_sets, &cfg.suite)?;
    let temperature = fit_temperature_for(&dev_preds, &dev_sets, VANILLA)?;
    let mut dev_opts = EvalOptions::new("dev");
    dev_opts.temperature = Some(temperature.value);
    dev_opts.binning = binning;
    let dev_rows = evaluate_predictions(&dev_preds, &dev_sets, &dev_opts)?;

    let ctx = Ctx {
        sets: &sets,
        suite: &cfg.suite,
        temperature: temperature.value,
        binning,
    };
    let source = ctx.level(&test, SOURCE_TAG.into(), None)?;

    let mut families = vec![
        uw_family("uw", ReplacementMode::unknown(), &test, &corpus.lexicon, &stats, cfg, &ctx)?,
        uw_family("kw", ReplacementMode::known(cfg.known_threshold)?, &test, &corpus.lexicon, &stats, cfg, &ctx)?,
    ];

    let importance = ImportanceMap::fallback(&test, &stats);
    let buckets =
        shift_dataset_uw_buckets_intersected(&test, ReplacementMode::unknown(), cfg.seed, &corpus.lexicon, &stats, &importance)?;
    families.push(DemoFamily {
        name: "uw-bucket".into(),
        levels: buckets
            .into_iter()
            .enumerate()
            .map(|(b, (shifted, st))| ctx.level(&shifted, format!("uw:b={}", b + 1), Some(st)))
            .collect::<Result<_>>()?,
    });

    let fixed = filter_by_context_length(&test, cfg.ic_turns)?;
    families.push(DemoFamily {
        name: "ic".into(),
        levels: (0..cfg.ic_turns)
            .map(|k| {
                let shifted = shift_dataset_ic(&fixed, DeletionRatio::new(k, cfg.ic_turns)?)?;
                ctx.level(&shifted, format!("ic:r={k}/{}", cfg.ic_turns), None)
            })
            .collect::<Result<_>>()?,
    });

    families.push(DemoFamily {
        name: "sr".into(),
        levels: (1..=cfg.ic_turns)
            .rev()
            .map(|t| ctx.level(&build_sr_sets(&test, t)?, format!("sr:t={t}"), None))
            .collect::<Result<_>>()?,
    });

    Ok(DemoReport {
        temperature: temperature.into(),
        dev: dev_rows,
        source,
        families,
    })
}

/// Adjacent steps that move against the expected direction, as positive
/// magnitudes. `rising` means values should not decrease.
pub fn trend_violations(values: &[f64], rising: bool) -> Vec<f64> {
    values
        .windows(2)
        .map(|w| if rising { w[0] - w[1] } else { w[1] - w[0] })
        .filter(|&d| d > 0.0)
        .collect()
}

/// At most one violation, of size `<= tolerance`.
pub fn is_monotone_within(values: &[f64], rising: bool, tolerance: f64) -> bool {
    let v = trend_violations(values, rising);
    v.is_empty() || (v.len() == 1 && v[0] <= tolerance)
}

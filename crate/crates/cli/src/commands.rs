use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

use dshift::calibration::TemperatureRecord;
use dshift::corpus::{
    build_candidate_sets, expand_instances, filter_by_context_length, load_candidate_sets, load_dialogues,
    load_instances, Instance, SOURCE_TAG,
};
use dshift::demo::{run_demo, DemoConfig};
use dshift::harness::{load_predictions, Prediction};
use dshift::importance::{load_importance, ImportanceMap, BUCKETS};
use dshift::io::to_jsonl;
use dshift::lexicon::{build_vocab_stats, ReplacementMode, SynonymLexicon, VocabStats, DEFAULT_KNOWN_THRESHOLD};
use dshift::metrics::{load_reports, EceBinning, EceMode};
use dshift::pipeline::{evaluate_predictions, fit_temperature_for, score_dataset, EvalOptions, ToySuiteConfig};
use dshift::report::build_table;
use dshift::shift_ic::{build_sr_sets, shift_dataset_ic, DeletionRatio};
use dshift::shift_uw::{shift_dataset_uw, shift_dataset_uw_buckets_intersected, ShiftStats, UwConfig};
use dshift::synth::{generate, SynthConfig};

use crate::args::*;
use crate::manifest::Run;

/// Bad flag combination; reported with exit code 2.
#[derive(Debug)]
pub struct Usage(pub String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Expand(a) => expand(&a),
        Command::Vocab(a) => vocab(&a),
        Command::Shift(a) => shift(&a),
        Command::Importance(a) => importance(&a),
        Command::Candidates(a) => candidates(&a),
        Command::Score(a) => score(&a),
        Command::FitTemp(a) => fit_temp(&a),
        Command::Eval(a) => eval(&a),
        Command::Report(a) => report(&a),
        Command::Synth(a) => synth(&a),
        Command::Demo(a) => demo(&a),
    }
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn json_line(value: &impl Serialize) -> String {
    let mut s = serde_json::to_string(value).expect("serializable");
    s.push('\n');
    s
}

fn expand(a: &ExpandArgs) -> Result<()> {
    if a.turns == Some(0) {
        return Err(usage("--turns must be at least 1"));
    }
    let dialogues = load_dialogues(&a.input)?;
    let mut instances = expand_instances(&dialogues)?;
    if let Some(t) = a.turns {
        instances = filter_by_context_length(&instances, t)?;
    }
    let mut run = Run::new("expand", a, None);
    run.input(&a.input);
    run.output(&a.out, to_jsonl(&instances));
    run.finish()?;
    Ok(())
}

fn vocab(a: &VocabArgs) -> Result<()> {
    let stats = build_vocab_stats(&load_dialogues(&a.input)?);
    let mut run = Run::new("vocab", a, None);
    run.input(&a.input);
    run.output(&a.out, to_jsonl(&stats.to_records()));
    run.finish()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
enum ImportanceSource {
    Fallback,
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
enum ShiftPlan {
    Ratio {
        mode: ReplacementMode,
        ratio: f64,
        lexicon: PathBuf,
        stats: PathBuf,
    },
    Bucket {
        mode: ReplacementMode,
        bucket: usize,
        importance: ImportanceSource,
        intersect: bool,
        lexicon: PathBuf,
        stats: PathBuf,
    },
    Ic(DeletionRatio),
    Sr(usize),
}

/// Checks flag combinations without touching the file system.
fn plan_shift(a: &ShiftArgs) -> Result<ShiftPlan> {
    let forbid = |set: bool, flag: &str| -> Result<()> {
        if set {
            Err(usage(format!("{flag} is not valid with --method {}", method_name(a.method))))
        } else {
            Ok(())
        }
    };
    match a.method {
        ShiftMethod::Uw | ShiftMethod::Kw => {
            forbid(a.turns.is_some(), "--turns")?;
            let mode = if a.method == ShiftMethod::Kw {
                ReplacementMode::known(a.known_threshold.unwrap_or(DEFAULT_KNOWN_THRESHOLD))
                    .map_err(|e| usage(e.to_string()))?
            } else {
                forbid(a.known_threshold.is_some(), "--known-threshold")?;
                ReplacementMode::unknown()
            };
            let lexicon = a.lexicon.clone().ok_or_else(|| usage("--lexicon is required for uw/kw"))?;
            let stats = a.stats.clone().ok_or_else(|| usage("--stats is required for uw/kw"))?;
            match (&a.ratio, a.bucket) {
                (Some(_), Some(_)) => Err(usage("--ratio and --bucket are mutually exclusive")),
                (None, None) => Err(usage("one of --ratio or --bucket is required")),
                (Some(r), None) => {
                    forbid(a.importance.is_some(), "--importance without --bucket")?;
                    forbid(a.intersect_buckets, "--intersect-buckets without --bucket")?;
                    let ratio: f64 = r.parse().map_err(|_| usage(format!("--ratio `{r}` is not a decimal")))?;
                    UwConfig::with_ratio(mode, ratio, a.seed).map_err(|e| usage(e.to_string()))?;
                    Ok(ShiftPlan::Ratio {
                        mode,
                        ratio,
                        lexicon,
                        stats,
                    })
                }
                (None, Some(bucket)) => {
                    UwConfig::with_bucket(mode, bucket, a.seed).map_err(|e| usage(e.to_string()))?;
                    let importance = match a.importance.as_deref() {
                        None => return Err(usage("--bucket requires --importance <file|fallback>")),
                        Some("fallback") => ImportanceSource::Fallback,
                        Some(p) => ImportanceSource::File(PathBuf::from(p)),
                    };
                    Ok(ShiftPlan::Bucket {
                        mode,
                        bucket,
                        importance,
                        intersect: a.intersect_buckets,
                        lexicon,
                        stats,
                    })
                }
            }
        }
        ShiftMethod::Ic | ShiftMethod::Sr => {
            forbid(a.bucket.is_some(), "--bucket")?;
            forbid(a.importance.is_some(), "--importance")?;
            forbid(a.intersect_buckets, "--intersect-buckets")?;
            forbid(a.known_threshold.is_some(), "--known-threshold")?;
            forbid(a.lexicon.is_some(), "--lexicon")?;
            forbid(a.stats.is_some(), "--stats")?;
            if a.method == ShiftMethod::Ic {
                forbid(a.turns.is_some(), "--turns")?;
                let r = a.ratio.as_deref().ok_or_else(|| usage("--ratio k/n is required for ic"))?;
                Ok(ShiftPlan::Ic(r.parse().map_err(|e: dshift::Error| usage(e.to_string()))?))
            } else {
                forbid(a.ratio.is_some(), "--ratio")?;
                match a.turns {
                    Some(t) if t >= 1 => Ok(ShiftPlan::Sr(t)),
                    Some(_) => Err(usage("--turns must be at least 1")),
                    None => Err(usage("--turns is required for sr")),
                }
            }
        }
    }
}

fn method_name(m: ShiftMethod) -> &'static str {
    match m {
        ShiftMethod::Uw => "uw",
        ShiftMethod::Kw => "kw",
        ShiftMethod::Ic => "ic",
        ShiftMethod::Sr => "sr",
    }
}

#[derive(Debug, Serialize)]
struct ShiftSidecar {
    shift_tag: String,
    #[serde(flatten)]
    stats: ShiftStats,
    avg_deleted: f64,
}

fn sidecar(tag: String, input: usize, kept: &[Instance]) -> ShiftSidecar {
    let n = kept.len().max(1) as f64;
    ShiftSidecar {
        shift_tag: tag,
        stats: ShiftStats {
            kept: kept.len(),
            dropped: input - kept.len(),
            avg_replacements: kept.iter().map(|i| i.provenance.replaced_count).sum::<usize>() as f64 / n,
        },
        avg_deleted: kept.iter().map(|i| i.provenance.deleted_count).sum::<usize>() as f64 / n,
    }
}

fn shift(a: &ShiftArgs) -> Result<()> {
    let plan = plan_shift(a)?;
    let mut run = Run::new("shift", a, Some(a.seed));
    run.input(&a.input);
    let instances = load_instances(&a.input)?;
    let load_word_data = |run: &mut Run, lexicon: &Path, stats: &Path| -> Result<(SynonymLexicon, VocabStats)> {
        run.input(lexicon);
        run.input(stats);
        Ok((SynonymLexicon::load(lexicon)?, VocabStats::load(stats)?))
    };
    let (shifted, tag) = match &plan {
        ShiftPlan::Ratio {
            mode,
            ratio,
            lexicon,
            stats,
        } => {
            let (lex, st) = load_word_data(&mut run, lexicon, stats)?;
            let cfg = UwConfig::with_ratio(*mode, *ratio, a.seed)?;
            (shift_dataset_uw(&instances, &cfg, &lex, &st, None)?.0, cfg.shift_tag())
        }
        ShiftPlan::Bucket {
            mode,
            bucket,
            importance,
            intersect,
            lexicon,
            stats,
        } => {
            let (lex, st) = load_word_data(&mut run, lexicon, stats)?;
            let map = match importance {
                ImportanceSource::Fallback => ImportanceMap::fallback(&instances, &st),
                ImportanceSource::File(p) => {
                    run.input(p);
                    let m = load_importance(p)?;
                    m.validate_against(&instances)?;
                    m
                }
            };
            let cfg = UwConfig::with_bucket(*mode, *bucket, a.seed)?;
            let kept = if *intersect {
                let mut all = shift_dataset_uw_buckets_intersected(&instances, *mode, a.seed, &lex, &st, &map)?;
                debug_assert_eq!(all.len(), BUCKETS);
                all.swap_remove(bucket - 1).0
            } else {
                shift_dataset_uw(&instances, &cfg, &lex, &st, Some(&map))?.0
            };
            (kept, cfg.shift_tag())
        }
        ShiftPlan::Ic(ratio) => {
            let out = shift_dataset_ic(&instances, *ratio)?;
            let tag = out
                .first()
                .map(|i| i.provenance.shift_tag.clone())
                .unwrap_or_else(|| format!("ic:r={ratio}"));
            (out, tag)
        }
        ShiftPlan::Sr(t) => (build_sr_sets(&instances, *t)?, format!("sr:t={t}")),
    };
    let side = sidecar(tag, instances.len(), &shifted);
    run.output(&a.out, to_jsonl(&shifted));
    run.output(&with_suffix(&a.out, ".stats.json"), json_line(&side));
    run.finish()?;
    Ok(())
}

fn importance(a: &ImportanceArgs) -> Result<()> {
    let instances = load_instances(&a.input)?;
    let stats = VocabStats::load(&a.stats)?;
    let map = ImportanceMap::fallback(&instances, &stats);
    let mut run = Run::new("importance", a, None);
    run.input(&a.input);
    run.input(&a.stats);
    run.output(&a.out, to_jsonl(&map.to_records()));
    run.finish()?;
    Ok(())
}

fn candidates(a: &CandidatesArgs) -> Result<()> {
    if a.k < 2 {
        return Err(usage("--k must be at least 2"));
    }
    let instances = load_instances(&a.input)?;
    let sets = build_candidate_sets(&instances, a.k, a.seed)?;
    let mut run = Run::new("candidates", a, Some(a.seed));
    run.input(&a.input);
    run.output(&a.out, to_jsonl(&sets));
    run.finish()?;
    Ok(())
}

fn score(a: &ScoreArgs) -> Result<()> {
    let cfg = ToySuiteConfig {
        scale: a.scale,
        dropout_sigma: a.dropout_sigma,
        member_sigma: a.member_sigma,
        passes: a.passes,
        members: a.members,
        seed: a.seed,
    };
    if a.passes < 1 || a.members < 1 {
        return Err(usage("--passes and --members must be at least 1"));
    }
    let instances = load_instances(&a.input)?;
    let sets = load_candidate_sets(&a.candidates)?;
    let preds = score_dataset(&instances, &sets, &cfg)?;
    let records: Vec<_> = preds.iter().map(Prediction::to_record).collect();
    let mut run = Run::new("score", a, Some(a.seed));
    run.input(&a.input);
    run.input(&a.candidates);
    run.output(&a.out, to_jsonl(&records));
    run.finish()?;
    Ok(())
}

fn fit_temp(a: &FitTempArgs) -> Result<()> {
    let preds = load_predictions(&a.input)?;
    let sets = load_candidate_sets(&a.candidates)?;
    let t = fit_temperature_for(&preds, &sets, &a.method)?;
    let mut run = Run::new("fit-temp", a, None);
    run.input(&a.input);
    run.input(&a.candidates);
    run.output(&a.out, json_line(&TemperatureRecord::from(t)));
    run.finish()?;
    Ok(())
}

fn load_temperature(path: &Path) -> Result<f64> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let rec: TemperatureRecord =
        serde_json::from_str(text.trim()).with_context(|| format!("parsing {}", path.display()))?;
    Ok(rec.temperature)
}

fn eval(a: &EvalArgs) -> Result<()> {
    let binning = EceBinning::new(a.ece_bins).map_err(|e| usage(e.to_string()))?;
    let mut run = Run::new("eval", a, None);
    run.input(&a.input);
    run.input(&a.candidates);
    let preds = load_predictions(&a.input)?;
    let sets = load_candidate_sets(&a.candidates)?;
    let mut opts = EvalOptions::new(a.shift_tag.clone().unwrap_or_else(|| SOURCE_TAG.into()));
    opts.binning = binning;
    opts.mode = match a.ece_mode {
        EceModeArg::Top1 => EceMode::Top1,
        EceModeArg::Percandidate => EceMode::PerCandidate,
    };
    if let Some(p) = &a.temperature {
        run.input(p);
        opts.temperature = Some(load_temperature(p)?);
    }
    if let Some(p) = &a.instances {
        run.input(p);
        let instances = load_instances(p)?;
        if a.shift_tag.is_none() {
            if let Some(first) = instances.first() {
                opts.shift_tag = first.provenance.shift_tag.clone();
            }
        }
        opts.expected_ids = Some(instances.into_iter().map(|i| i.id).collect());
    }
    let rows = evaluate_predictions(&preds, &sets, &opts)?;
    run.output(&a.out, to_jsonl(&rows));
    run.finish()?;
    Ok(())
}

fn report(a: &ReportArgs) -> Result<()> {
    let mut run = Run::new("report", a, None);
    let mut rows = Vec::new();
    for p in &a.inputs {
        run.input(p);
        rows.extend(load_reports(p)?);
    }
    let table = build_table(&rows)?;
    let body = match a.format {
        TableFormat::Md => table.to_markdown(),
        TableFormat::Csv => table.to_wide_csv(),
    };
    let curves = a.curves.clone().unwrap_or_else(|| with_suffix(&a.out, ".curves.csv"));
    run.output(&a.out, body);
    run.output(&curves, table.to_long_csv());
    run.finish()?;
    Ok(())
}

fn synth(a: &SynthArgs) -> Result<()> {
    let cfg = SynthConfig {
        seed: a.seed,
        train_dialogues: a.train,
        dev_dialogues: a.dev,
        test_dialogues: a.test,
        ..SynthConfig::default()
    };
    if a.train == 0 || a.dev == 0 || a.test == 0 {
        return Err(usage("--train, --dev and --test must be positive"));
    }
    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let corpus = generate(&cfg);
    let mut run = Run::new("synth", a, Some(a.seed));
    run.output(&a.out.join("train.jsonl"), to_jsonl(&corpus.train));
    run.output(&a.out.join("dev.jsonl"), to_jsonl(&corpus.dev));
    run.output(&a.out.join("test.jsonl"), to_jsonl(&corpus.test));
    run.output(&a.out.join("lexicon.jsonl"), to_jsonl(&corpus.lexicon.to_records()));
    run.output(&a.out.join("vocab.jsonl"), to_jsonl(&build_vocab_stats(&corpus.train).to_records()));
    run.manifest_at(a.out.join("manifest.json"));
    run.finish()?;
    Ok(())
}

fn demo(a: &DemoArgs) -> Result<()> {
    let mut cfg = if a.quick { DemoConfig::quick() } else { DemoConfig::default() };
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    let report = run_demo(&cfg)?;
    let table = build_table(&report.all_rows())?;
    let (body, ext) = match a.format {
        TableFormat::Md => (table.to_markdown(), ".table.md"),
        TableFormat::Csv => (table.to_wide_csv(), ".table.csv"),
    };
    print!("{}", table.to_markdown());
    println!("temperature (fit on dev): {:.4}", report.temperature.temperature);
    let mut json = serde_json::to_string_pretty(&report)?;
    json.push('\n');
    let mut run = Run::new("demo", a, Some(cfg.seed));
    run.output(&a.out, json);
    run.output(&with_suffix(&a.out, ext), body);
    run.output(&with_suffix(&a.out, ".curves.csv"), table.to_long_csv());
    run.finish()?;
    Ok(())
}

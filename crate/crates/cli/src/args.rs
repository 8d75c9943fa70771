use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "dshift", version, about = "Gradual distribution shifts for response ranking, and calibration under them")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Expand dialogues into (context, response) instances.
    Expand(ExpandArgs),
    /// Count training-corpus tokens.
    Vocab(VocabArgs),
    /// Build a shifted copy of an instance file.
    Shift(ShiftArgs),
    /// Write frequency-based fallback importance scores.
    Importance(ImportanceArgs),
    /// Sample candidate sets (gold plus negatives).
    Candidates(CandidatesArgs),
    /// Score candidates with the built-in overlap rankers.
    Score(ScoreArgs),
    /// Fit a temperature on a validation predictions file.
    FitTemp(FitTempArgs),
    /// Compute Acc / Brier / ECE per method.
    Eval(EvalArgs),
    /// Merge report files into a table and a long-form curve CSV.
    Report(ReportArgs),
    /// Write the synthetic corpus and lexicon.
    Synth(SynthArgs),
    /// Run the whole pipeline on the synthetic corpus.
    Demo(DemoArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct ExpandArgs {
    /// Dialogue file.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Keep only instances whose context has exactly this many utterances.
    #[arg(long)]
    pub turns: Option<usize>,
}

#[derive(Debug, Args, Serialize)]
pub struct VocabArgs {
    /// Training dialogue file.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ShiftMethod {
    Uw,
    Kw,
    Ic,
    Sr,
}

#[derive(Debug, Args, Serialize)]
pub struct ShiftArgs {
    /// Instance file.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Shifted instance file; statistics go to `<out>.stats.json`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum)]
    pub method: ShiftMethod,
    /// Decimal replacement ratio (uw, kw) or `k/n` deletion ratio (ic).
    #[arg(long)]
    pub ratio: Option<String>,
    /// Importance quintile 1-5 (uw, kw).
    #[arg(long)]
    pub bucket: Option<usize>,
    /// Importance file, or `fallback` for frequency-based scores.
    #[arg(long)]
    pub importance: Option<String>,
    /// Keep only instances that survive in all five buckets.
    #[arg(long)]
    pub intersect_buckets: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Minimum training count (exclusive) of a known-word replacement.
    #[arg(long)]
    pub known_threshold: Option<u64>,
    /// Synonym lexicon file.
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    /// Training vocabulary counts.
    #[arg(long)]
    pub stats: Option<PathBuf>,
    /// Context length for sr.
    #[arg(long)]
    pub turns: Option<usize>,
}

#[derive(Debug, Args, Serialize)]
pub struct ImportanceArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub stats: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct CandidatesArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = dshift::corpus::DEFAULT_K)]
    pub k: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct ScoreArgs {
    /// Instance file (source or shifted).
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub candidates: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = dshift::harness::DEFAULT_PASSES)]
    pub passes: usize,
    #[arg(long, default_value_t = dshift::harness::DEFAULT_MEMBERS)]
    pub members: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Logit scale of the overlap score.
    #[arg(long, default_value_t = 10.0)]
    pub scale: f64,
    #[arg(long, default_value_t = 0.8)]
    pub dropout_sigma: f64,
    #[arg(long, default_value_t = 1.0)]
    pub member_sigma: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct FitTempArgs {
    /// Validation predictions file.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub candidates: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Method whose records are fitted.
    #[arg(long, default_value = dshift::pipeline::VANILLA)]
    pub method: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EceModeArg {
    Top1,
    Percandidate,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    /// Predictions file.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub candidates: PathBuf,
    /// Report file, one row per method.
    #[arg(long)]
    pub out: PathBuf,
    /// Temperature file written by `fit-temp`.
    #[arg(long)]
    pub temperature: Option<PathBuf>,
    #[arg(long, default_value_t = dshift::metrics::DEFAULT_ECE_BINS)]
    pub ece_bins: usize,
    #[arg(long, value_enum, default_value_t = EceModeArg::Top1)]
    pub ece_mode: EceModeArg,
    /// Instance file listing the ids every method must cover.
    #[arg(long)]
    pub instances: Option<PathBuf>,
    /// Level label; defaults to the instances' shift tag, else `source`.
    #[arg(long)]
    pub shift_tag: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TableFormat {
    Md,
    Csv,
}

#[derive(Debug, Args, Serialize)]
pub struct ReportArgs {
    /// Report files, concatenated in order.
    #[arg(long = "in", required = true, num_args = 1..)]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = TableFormat::Md)]
    pub format: TableFormat,
    /// Long-form CSV; defaults to `<out>.curves.csv`.
    #[arg(long)]
    pub curves: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    /// Directory receiving train/dev/test dialogues, lexicon and vocab.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 2021)]
    pub seed: u64,
    #[arg(long, default_value_t = 800)]
    pub train: usize,
    #[arg(long, default_value_t = 150)]
    pub dev: usize,
    #[arg(long, default_value_t = 400)]
    pub test: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct DemoArgs {
    /// Full demo report (JSON).
    #[arg(long)]
    pub out: PathBuf,
    /// Smaller corpus.
    #[arg(long)]
    pub quick: bool,
    #[arg(long, value_enum, default_value_t = TableFormat::Md)]
    pub format: TableFormat,
    #[arg(long)]
    pub seed: Option<u64>,
}

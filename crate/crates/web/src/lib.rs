//! Browser bindings for the shift generator. Every export returns a JSON
//! string; the page in `www/` renders it.

use std::cell::OnceCell;
use std::collections::BTreeSet;

use serde::Serialize;
use wasm_bindgen::prelude::*;

use dshift::corpus::{expand_instances, Instance};
use dshift::demo::{run_demo, DemoConfig};
use dshift::harness::softmax;
use dshift::lexicon::{build_vocab_stats, ReplacementMode, VocabStats};
use dshift::metrics::argmax;
use dshift::shift_ic::apply_ic;
use dshift::shift_uw::{apply_uw, UwConfig};
use dshift::synth::{generate, SynthConfig, SynthCorpus};

const KNOWN_THRESHOLD: u64 = 200;

struct Fixture {
    corpus: SynthCorpus,
    stats: VocabStats,
    /// Last instance of every test dialogue.
    instances: Vec<Instance>,
}

thread_local! {
    static FIXTURE: OnceCell<Fixture> = const { OnceCell::new() };
}

fn with_fixture<T>(f: impl FnOnce(&Fixture) -> T) -> T {
    FIXTURE.with(|cell| {
        let fx = cell.get_or_init(|| {
            let corpus = generate(&SynthConfig {
                train_dialogues: 300,
                dev_dialogues: 1,
                test_dialogues: 50,
                ..SynthConfig::default()
            });
            let stats = build_vocab_stats(&corpus.train);
            let instances = corpus
                .test
                .iter()
                .map(|d| expand_instances(std::slice::from_ref(d)).unwrap().pop().unwrap())
                .collect();
            Fixture {
                corpus,
                stats,
                instances,
            }
        });
        f(fx)
    })
}

#[derive(Debug, Serialize)]
struct Token {
    text: String,
    replaced: bool,
}

#[derive(Debug, Serialize)]
struct Preview {
    id: String,
    shift_tag: String,
    deleted: usize,
    replaced: usize,
    original: Vec<String>,
    context: Vec<Vec<Token>>,
    response: String,
}

fn render(source: &Instance, shifted: &Instance) -> Preview {
    let flagged: BTreeSet<(usize, usize)> = shifted.provenance.replaced_positions.iter().copied().collect();
    Preview {
        id: source.id.clone(),
        shift_tag: shifted.provenance.shift_tag.clone(),
        deleted: shifted.provenance.deleted_count,
        replaced: shifted.provenance.replaced_count,
        original: source.context.iter().map(|u| u.text().to_string()).collect(),
        context: shifted
            .context
            .iter()
            .enumerate()
            .map(|(u, utt)| {
                utt.tokens()
                    .iter()
                    .enumerate()
                    .map(|(t, tok)| Token {
                        text: tok.clone(),
                        replaced: flagged.contains(&(u, t)),
                    })
                    .collect()
            })
            .collect(),
        response: shifted.response.text().to_string(),
    }
}

pub fn dialogue_count() -> usize {
    with_fixture(|fx| fx.instances.len())
}

/// `method` is `uw` or `kw` with a decimal `level` (replacement ratio), or
/// `ic` with an integer `level` (leading utterances removed).
pub fn shift_preview_json(dialogue: usize, method: &str, level: &str, seed: u64) -> Result<String, String> {
    with_fixture(|fx| {
        let source = fx
            .instances
            .get(dialogue)
            .ok_or_else(|| format!("dialogue index {dialogue} out of range 0..{}", fx.instances.len()))?;
        let shifted = match method {
            "uw" | "kw" => {
                let mode = if method == "uw" {
                    ReplacementMode::unknown()
                } else {
                    ReplacementMode::known(KNOWN_THRESHOLD).map_err(|e| e.to_string())?
                };
                let ratio: f64 = level.parse().map_err(|_| format!("`{level}` is not a ratio"))?;
                let cfg = UwConfig::with_ratio(mode, ratio, seed).map_err(|e| e.to_string())?;
                apply_uw(source, &cfg, &fx.corpus.lexicon, &fx.stats, None)
                    .map_err(|e| e.to_string())?
                    .ok_or_else(|| format!("cannot replace {level} of this context; the instance would be dropped"))?
            }
            "ic" => {
                let k: usize = level.parse().map_err(|_| format!("`{level}` is not a count"))?;
                let mut out = apply_ic(source, k).map_err(|e| e.to_string())?;
                out.provenance.shift_tag = format!("ic:r={k}/{}", source.context.len());
                out
            }
            other => return Err(format!("unknown method `{other}`")),
        };
        Ok(serde_json::to_string(&render(source, &shifted)).expect("serializable"))
    })
}

#[derive(Debug, Serialize)]
struct Scaled {
    temperature: f64,
    probs: Vec<f64>,
    argmax: usize,
    confidence: f64,
    entropy: f64,
}

/// Softmax of `logits / t` for comma- or space-separated logits.
pub fn temperature_json(logits: &str, t: f64) -> Result<String, String> {
    if !(t.is_finite() && t > 0.0) {
        return Err(format!("temperature must be positive, got {t}"));
    }
    let z = logits
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|_| format!("`{s}` is not a number")))
        .collect::<Result<Vec<f64>, String>>()?;
    if z.is_empty() {
        return Err("no logits given".into());
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err("logits must be finite".into());
    }
    let probs = softmax(&z.iter().map(|v| v / t).collect::<Vec<_>>());
    let top = argmax(&probs);
    let entropy = -probs.iter().filter(|p| **p > 0.0).map(|p| p * p.ln()).sum::<f64>();
    Ok(serde_json::to_string(&Scaled {
        temperature: t,
        confidence: probs[top],
        argmax: top,
        probs,
        entropy,
    })
    .expect("serializable"))
}

/// The full demo report on the small corpus.
pub fn demo_curves_json(seed: u64) -> Result<String, String> {
    let mut cfg = DemoConfig::quick();
    cfg.seed = seed;
    let report = run_demo(&cfg).map_err(|e| e.to_string())?;
    Ok(serde_json::to_string(&report).expect("serializable"))
}

#[wasm_bindgen(js_name = dialogueCount)]
pub fn dialogue_count_js() -> usize {
    dialogue_count()
}

#[wasm_bindgen(js_name = shiftPreview)]
pub fn shift_preview(dialogue: usize, method: &str, level: &str, seed: u32) -> Result<String, JsError> {
    shift_preview_json(dialogue, method, level, u64::from(seed)).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = temperatureScale)]
pub fn temperature_scale(logits: &str, t: f64) -> Result<String, JsError> {
    temperature_json(logits, t).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = demoCurves)]
pub fn demo_curves(seed: u32) -> Result<String, JsError> {
    demo_curves_json(u64::from(seed)).map_err(|e| JsError::new(&e))
}

//! Dialogue corpora, ranking instances, and candidate sets.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::seed::rng_for;

pub const DEFAULT_K: usize = 10;

fn is_punct(c: char) -> bool {
    !c.is_alphanumeric()
}

/// Splits on whitespace, then peels leading and trailing punctuation off each
/// chunk one character at a time. Returns byte spans into `text`.
pub fn token_spans(text: &str) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut chunk_start: Option<usize> = None;
    let flush = |start: usize, end: usize, spans: &mut Vec<(usize, usize)>| {
        let chunk = &text[start..end];
        let chars: Vec<(usize, char)> = chunk.char_indices().collect();
        let mut lo = 0;
        while lo < chars.len() && is_punct(chars[lo].1) {
            lo += 1;
        }
        if lo == chars.len() {
            for &(off, c) in &chars {
                spans.push((start + off, start + off + c.len_utf8()));
            }
            return;
        }
        let mut hi = chars.len();
        while hi > lo && is_punct(chars[hi - 1].1) {
            hi -= 1;
        }
        for &(off, c) in &chars[..lo] {
            spans.push((start + off, start + off + c.len_utf8()));
        }
        let core_end = if hi == chars.len() {
            chunk.len()
        } else {
            chars[hi].0
        };
        spans.push((start + chars[lo].0, start + core_end));
        for &(off, c) in &chars[hi..] {
            spans.push((start + off, start + off + c.len_utf8()));
        }
    };
    for (i, c) in text.char_indices() {
        if c.is_whitespace() {
            if let Some(s) = chunk_start.take() {
                flush(s, i, &mut spans);
            }
        } else if chunk_start.is_none() {
            chunk_start = Some(i);
        }
    }
    if let Some(s) = chunk_start {
        flush(s, text.len(), &mut spans);
    }
    spans
}

pub fn tokenize(text: &str) -> Vec<String> {
    token_spans(text)
        .into_iter()
        .map(|(a, b)| text[a..b].to_string())
        .collect()
}

/// A single turn of dialogue. Serialized as its raw text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "String", into = "String")]
pub struct Utterance {
    text: String,
    tokens: Vec<String>,
}

impl Utterance {
    pub fn new(text: impl Into<String>) -> Self {
        let text = text.into();
        let tokens = tokenize(&text);
        Self { text, tokens }
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Substitutes whole tokens in place, leaving every other byte of the text
    /// untouched. Replacements must themselves tokenize to a single token.
    pub fn replace_tokens(&self, replacements: &[(usize, String)]) -> Utterance {
        let spans = token_spans(&self.text);
        let mut sorted: Vec<&(usize, String)> = replacements.iter().collect();
        sorted.sort_by_key(|(i, _)| *i);
        let mut text = String::with_capacity(self.text.len());
        let mut cursor = 0;
        for (idx, word) in sorted {
            let (a, b) = spans[*idx];
            text.push_str(&self.text[cursor..a]);
            text.push_str(word);
            cursor = b;
        }
        text.push_str(&self.text[cursor..]);
        let out = Utterance::new(text);
        debug_assert_eq!(out.tokens.len(), self.tokens.len());
        out
    }
}

impl From<String> for Utterance {
    fn from(text: String) -> Self {
        Utterance::new(text)
    }
}

impl From<&str> for Utterance {
    fn from(text: &str) -> Self {
        Utterance::new(text)
    }
}

impl From<Utterance> for String {
    fn from(u: Utterance) -> Self {
        u.text
    }
}

impl fmt::Display for Utterance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dialogue {
    pub id: String,
    pub utterances: Vec<Utterance>,
}

/// Position of one context token: (utterance index, token index).
pub type TokenPos = (usize, usize);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub source_dialogue_id: String,
    pub response_turn_index: usize,
    pub shift_tag: String,
    #[serde(default)]
    pub replaced_count: usize,
    #[serde(default)]
    pub deleted_count: usize,
    /// Context tokens overwritten by word replacement.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub replaced_positions: Vec<TokenPos>,
}

pub const SOURCE_TAG: &str = "source";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub id: String,
    pub context: Vec<Utterance>,
    pub response: Utterance,
    pub provenance: Provenance,
}

impl Instance {
    pub fn context_token_count(&self) -> usize {
        self.context.iter().map(|u| u.tokens().len()).sum()
    }

    /// Context token positions in reading order.
    pub fn token_positions(&self) -> Vec<TokenPos> {
        self.context
            .iter()
            .enumerate()
            .flat_map(|(u, utt)| (0..utt.tokens().len()).map(move |t| (u, t)))
            .collect()
    }

    pub fn context_tokens(&self) -> impl Iterator<Item = &str> {
        self.context
            .iter()
            .flat_map(|u| u.tokens().iter().map(String::as_str))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub instance_id: String,
    pub candidates: Vec<Utterance>,
    pub gold_index: usize,
}

impl CandidateSet {
    pub fn k(&self) -> usize {
        self.candidates.len()
    }

    pub fn gold(&self) -> &Utterance {
        &self.candidates[self.gold_index]
    }
}

pub fn check_unique_ids<'a>(ids: impl IntoIterator<Item = &'a str>) -> Result<()> {
    let mut seen = HashSet::new();
    for id in ids {
        if !seen.insert(id) {
            return Err(Error::DuplicateId(id.to_string()));
        }
    }
    Ok(())
}

pub fn parse_dialogues(text: &str, origin: &Path) -> Result<Vec<Dialogue>> {
    let dialogues: Vec<Dialogue> = io::parse_jsonl(text, origin)?;
    check_unique_ids(dialogues.iter().map(|d| d.id.as_str()))?;
    Ok(dialogues)
}

pub fn load_dialogues(path: &Path) -> Result<Vec<Dialogue>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dialogues(&text, path)
}

pub fn load_instances(path: &Path) -> Result<Vec<Instance>> {
    let instances: Vec<Instance> = io::read_jsonl(path)?;
    check_unique_ids(instances.iter().map(|i| i.id.as_str()))?;
    Ok(instances)
}

pub fn load_candidate_sets(path: &Path) -> Result<Vec<CandidateSet>> {
    let sets: Vec<CandidateSet> = io::read_jsonl(path)?;
    check_unique_ids(sets.iter().map(|s| s.instance_id.as_str()))?;
    for s in &sets {
        if s.gold_index >= s.candidates.len() {
            return Err(Error::InvalidArgument(format!(
                "`{}`: gold_index {} out of range for {} candidates",
                s.instance_id,
                s.gold_index,
                s.candidates.len()
            )));
        }
    }
    Ok(sets)
}

/// Every turn after the first becomes the response of one instance whose
/// context is all preceding turns.
pub fn expand_instances(dialogues: &[Dialogue]) -> Result<Vec<Instance>> {
    let short: Vec<String> = dialogues
        .iter()
        .filter(|d| d.utterances.len() < 2)
        .map(|d| d.id.clone())
        .collect();
    if !short.is_empty() {
        return Err(Error::DialogueTooShort(short));
    }
    let mut out = Vec::new();
    for d in dialogues {
        for turn in 1..d.utterances.len() {
            out.push(Instance {
                id: format!("{}#{}", d.id, turn),
                context: d.utterances[..turn].to_vec(),
                response: d.utterances[turn].clone(),
                provenance: Provenance {
                    source_dialogue_id: d.id.clone(),
                    response_turn_index: turn,
                    shift_tag: SOURCE_TAG.to_string(),
                    replaced_count: 0,
                    deleted_count: 0,
                    replaced_positions: Vec::new(),
                },
            });
        }
    }
    Ok(out)
}

pub fn filter_by_context_length(instances: &[Instance], turns: usize) -> Result<Vec<Instance>> {
    if turns < 1 {
        return Err(Error::InvalidArgument(
            "context length filter needs turns >= 1".into(),
        ));
    }
    Ok(instances
        .iter()
        .filter(|i| i.context.len() == turns)
        .cloned()
        .collect())
}

/// Builds one k-way candidate list per instance: the gold response at a random
/// slot plus k-1 responses of other instances, none textually equal to the gold.
pub fn build_candidate_sets(instances: &[Instance], k: usize, seed: u64) -> Result<Vec<CandidateSet>> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("k must be >= 2, got {k}")));
    }
    check_unique_ids(instances.iter().map(|i| i.id.as_str()))?;
    let n = instances.len();
    let mut out = Vec::with_capacity(n);
    for (i, inst) in instances.iter().enumerate() {
        let mut rng = rng_for(seed, "candidates", &inst.id, 0);
        let gold = inst.response.text();
        let mut pool: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        let mut negatives = Vec::with_capacity(k - 1);
        let mut t = 0;
        while negatives.len() < k - 1 && t < pool.len() {
            let pick = rng.random_range(t..pool.len());
            pool.swap(t, pick);
            let cand = &instances[pool[t]].response;
            if cand.text() != gold {
                negatives.push(cand.clone());
            }
            t += 1;
        }
        if negatives.len() < k - 1 {
            return Err(Error::InsufficientNegatives {
                instance: inst.id.clone(),
                available: negatives.len(),
                needed: k - 1,
            });
        }
        let gold_index = rng.random_range(0..k);
        negatives.insert(gold_index, inst.response.clone());
        out.push(CandidateSet {
            instance_id: inst.id.clone(),
            candidates: negatives,
            gold_index,
        });
    }
    Ok(out)
}

//! A synthetic topical dialogue corpus with a matching synonym lexicon.
//!
//! Each dialogue sticks to one topic: every turn mixes words drawn from that
//! topic's vocabulary with a shared pool of filler words. Responses therefore
//! overlap lexically with their own context far more than with other
//! dialogues, which is what the toy overlap ranker keys on. Every word has
//! lexicon entries covering each selection rule: unseen pseudo-words (unknown
//! replacements), filler words (known replacements), a hyphenated compound and
//! a number word (both always rejected).

use std::collections::BTreeSet;

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Dialogue, Utterance};
use crate::lexicon::{LexiconRecord, SynonymLexicon};
use crate::seed::rng_for;

const FILLER: &[&str] = &[
    "i", "you", "we", "it", "the", "a", "is", "are", "and", "to", "of", "that", "so", "really",
    "just", "do", "have", "what", "my", "your",
];
const ONSETS: &[&str] = &["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z"];
const VOWELS: &[&str] = &["a", "e", "i", "o", "u"];
const RARE_ONSETS: &[&str] = &["qu", "x", "zh", "kw", "j"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub topics: usize,
    pub words_per_topic: usize,
    pub train_dialogues: usize,
    pub dev_dialogues: usize,
    pub test_dialogues: usize,
    pub min_turns: usize,
    pub max_turns: usize,
    /// Probability that a token is a topic word rather than filler.
    pub topic_rate: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 2021,
            topics: 40,
            words_per_topic: 12,
            train_dialogues: 800,
            dev_dialogues: 150,
            test_dialogues: 400,
            min_turns: 4,
            max_turns: 10,
            topic_rate: 0.45,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub train: Vec<Dialogue>,
    pub dev: Vec<Dialogue>,
    pub test: Vec<Dialogue>,
    pub lexicon: SynonymLexicon,
}

fn pseudo_word(rng: &mut ChaCha8Rng, onsets: &[&str], syllables: usize) -> String {
    (0..syllables)
        .map(|_| format!("{}{}", onsets.choose(rng).unwrap(), VOWELS.choose(rng).unwrap()))
        .collect()
}

fn fresh_word(
    rng: &mut ChaCha8Rng,
    taken: &mut BTreeSet<String>,
    onsets: &[&str],
    syllables: std::ops::RangeInclusive<usize>,
) -> String {
    loop {
        let n = rng.random_range(syllables.clone());
        let w = pseudo_word(rng, onsets, n);
        if taken.insert(w.clone()) {
            return w;
        }
    }
}

fn utterance(rng: &mut ChaCha8Rng, topic: &[String], cfg: &SynthConfig) -> Utterance {
    let len = rng.random_range(6..=11);
    let mut words: Vec<&str> = (0..len)
        .map(|_| {
            if rng.random_bool(cfg.topic_rate) {
                topic.choose(rng).unwrap().as_str()
            } else {
                *FILLER.choose(rng).unwrap()
            }
        })
        .collect();
    let end = if rng.random_bool(0.3) { "?" } else { "." };
    let last = words.pop().unwrap();
    let mut text = words.join(" ");
    if !text.is_empty() {
        text.push(' ');
    }
    text.push_str(last);
    text.push_str(end);
    Utterance::new(text)
}

fn dialogues(
    split: &str,
    count: usize,
    topics: &[Vec<String>],
    cfg: &SynthConfig,
) -> Vec<Dialogue> {
    (0..count)
        .map(|i| {
            let id = format!("{split}-{i:04}");
            let mut rng = rng_for(cfg.seed, "synth-dialogue", &id, 0);
            let topic = &topics[rng.random_range(0..topics.len())];
            let turns = rng.random_range(cfg.min_turns..=cfg.max_turns);
            Dialogue {
                utterances: (0..turns).map(|_| utterance(&mut rng, topic, cfg)).collect(),
                id,
            }
        })
        .collect()
}

pub fn generate(cfg: &SynthConfig) -> SynthCorpus {
    let mut rng = rng_for(cfg.seed, "synth-vocab", "", 0);
    let mut taken: BTreeSet<String> = FILLER.iter().map(|s| s.to_string()).collect();
    let topics: Vec<Vec<String>> = (0..cfg.topics)
        .map(|_| {
            (0..cfg.words_per_topic)
                .map(|_| fresh_word(&mut rng, &mut taken, ONSETS, 2..=3))
                .collect()
        })
        .collect();

    let headwords = topics
        .iter()
        .flatten()
        .cloned()
        .chain(FILLER.iter().map(|s| s.to_string()))
        .collect::<Vec<_>>();
    let records = headwords
        .into_iter()
        .map(|word| {
            let mut synonyms = vec![
                fresh_word(&mut rng, &mut taken, RARE_ONSETS, 3..=4),
                fresh_word(&mut rng, &mut taken, RARE_ONSETS, 2..=4),
            ];
            let known = loop {
                let f = *FILLER.choose(&mut rng).unwrap();
                if f != word {
                    break f;
                }
            };
            synonyms.push(known.to_string());
            synonyms.push(format!("{word}-{}", FILLER.choose(&mut rng).unwrap()));
            if rng.random_bool(0.2) {
                synonyms.push("two".to_string());
            }
            LexiconRecord { word, synonyms }
        })
        .collect::<Vec<_>>();

    SynthCorpus {
        train: dialogues("train", cfg.train_dialogues, &topics, cfg),
        dev: dialogues("dev", cfg.dev_dialogues, &topics, cfg),
        test: dialogues("test", cfg.test_dialogues, &topics, cfg),
        lexicon: SynonymLexicon::from_records(records),
    }
}

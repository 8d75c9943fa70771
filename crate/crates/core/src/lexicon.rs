//! Training vocabulary statistics, the synonym lexicon, and replacement-word
//! selection.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{tokenize, Dialogue};
use crate::error::{Error, Result};
use crate::io;

pub const DEFAULT_KNOWN_THRESHOLD: u64 = 5000;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct VocabStats {
    counts: BTreeMap<String, u64>,
    total_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VocabRecord {
    pub word: String,
    pub count: u64,
}

impl VocabStats {
    pub fn count(&self, word: &str) -> u64 {
        self.counts.get(word).copied().unwrap_or(0)
    }

    pub fn total_tokens(&self) -> u64 {
        self.total_tokens
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn max_count(&self) -> u64 {
        self.counts.values().copied().max().unwrap_or(0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u64)> {
        self.counts.iter().map(|(w, c)| (w.as_str(), *c))
    }

    pub fn from_records(records: impl IntoIterator<Item = VocabRecord>) -> Result<Self> {
        let mut stats = VocabStats::default();
        for r in records {
            if r.count == 0 {
                return Err(Error::InvalidArgument(format!("vocab word `{}` has count 0", r.word)));
            }
            if stats.counts.insert(r.word.clone(), r.count).is_some() {
                return Err(Error::DuplicateId(r.word));
            }
            stats.total_tokens += r.count;
        }
        Ok(stats)
    }

    pub fn to_records(&self) -> Vec<VocabRecord> {
        self.iter()
            .map(|(word, count)| VocabRecord {
                word: word.to_string(),
                count,
            })
            .collect()
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_records(io::read_jsonl::<VocabRecord>(path)?)
    }
}

/// Counts every token of every utterance, contexts and responses alike.
pub fn build_vocab_stats(dialogues: &[Dialogue]) -> VocabStats {
    let mut stats = VocabStats::default();
    for tok in dialogues
        .iter()
        .flat_map(|d| d.utterances.iter())
        .flat_map(|u| u.tokens().iter())
    {
        *stats.counts.entry(tok.clone()).or_insert(0) += 1;
        stats.total_tokens += 1;
    }
    stats
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SynonymLexicon {
    entries: BTreeMap<String, Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LexiconRecord {
    pub word: String,
    pub synonyms: Vec<String>,
}

impl SynonymLexicon {
    /// Drops empty candidates and self-references; merges repeated headwords.
    pub fn from_records(records: impl IntoIterator<Item = LexiconRecord>) -> Self {
        let mut entries: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for r in records {
            let list = entries.entry(r.word.clone()).or_default();
            for s in r.synonyms {
                if !s.is_empty() && s != r.word && !list.contains(&s) {
                    list.push(s);
                }
            }
        }
        SynonymLexicon { entries }
    }

    pub fn to_records(&self) -> Vec<LexiconRecord> {
        self.entries
            .iter()
            .map(|(w, s)| LexiconRecord {
                word: w.clone(),
                synonyms: s.clone(),
            })
            .collect()
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(Self::from_records(io::read_jsonl::<LexiconRecord>(path)?))
    }

    pub fn synonyms(&self, word: &str) -> &[String] {
        self.entries.get(word).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Unit-cost edit distance over Unicode scalar values.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WordClass {
    Unknown,
    Known,
    Other,
}

/// Unknown iff never seen in training; known iff seen strictly more than
/// `threshold` times.
pub fn classify_word(word: &str, stats: &VocabStats, threshold: u64) -> WordClass {
    match stats.count(word) {
        0 => WordClass::Unknown,
        c if c > threshold => WordClass::Known,
        _ => WordClass::Other,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReplacementKind {
    UnknownWord,
    KnownWord,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReplacementMode {
    pub kind: ReplacementKind,
    pub known_threshold: u64,
}

impl ReplacementMode {
    pub fn new(kind: ReplacementKind, known_threshold: u64) -> Result<Self> {
        if known_threshold < 1 {
            return Err(Error::InvalidArgument("known threshold must be >= 1".into()));
        }
        Ok(Self {
            kind,
            known_threshold,
        })
    }

    pub fn unknown() -> Self {
        Self {
            kind: ReplacementKind::UnknownWord,
            known_threshold: DEFAULT_KNOWN_THRESHOLD,
        }
    }

    pub fn known(threshold: u64) -> Result<Self> {
        Self::new(ReplacementKind::KnownWord, threshold)
    }

    pub fn tag(&self) -> &'static str {
        match self.kind {
            ReplacementKind::UnknownWord => "uw",
            ReplacementKind::KnownWord => "kw",
        }
    }

    fn admits(&self, candidate: &str, stats: &VocabStats) -> bool {
        let class = classify_word(candidate, stats, self.known_threshold);
        match self.kind {
            ReplacementKind::UnknownWord => class == WordClass::Unknown,
            ReplacementKind::KnownWord => class == WordClass::Known,
        }
    }
}

const NUMBER_WORDS: &[&str] = &[
    "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten",
    "eleven", "twelve", "thirteen", "fourteen", "fifteen", "sixteen", "seventeen", "eighteen",
    "nineteen", "twenty", "thirty", "forty", "fifty", "sixty", "seventy", "eighty", "ninety",
    "hundred", "thousand", "million",
];

/// Digit strings (optionally signed, optionally with one decimal point) and
/// English number words.
pub fn is_numeric(s: &str) -> bool {
    let body = s.strip_prefix(['+', '-']).unwrap_or(s);
    let mut parts = body.splitn(2, '.');
    let int = parts.next().unwrap_or("");
    let frac = parts.next();
    let digits = |p: &str| p.chars().all(|c| c.is_ascii_digit());
    let numeral = match frac {
        None => !int.is_empty() && digits(int),
        Some(f) => (!int.is_empty() || !f.is_empty()) && digits(int) && digits(f),
    };
    numeral || NUMBER_WORDS.iter().any(|w| w.eq_ignore_ascii_case(s))
}

/// Candidates that span several words, or that the tokenizer would not keep
/// as one token, cannot be substituted for a single token.
pub fn is_multi_token(s: &str) -> bool {
    if s.contains(|c: char| c.is_whitespace() || c == '-' || c == '_') {
        return true;
    }
    let toks = tokenize(s);
    toks.len() != 1 || toks[0] != s
}

/// Chooses the replacement for `word`: numeric and multi-token synonyms are
/// excluded, then synonyms are filtered by training frequency according to
/// `mode`, and the survivor farthest in edit distance from `word` wins, ties
/// going to the lexicographically smallest. `None` means the word cannot be
/// a target.
pub fn select_replacement(
    word: &str,
    lexicon: &SynonymLexicon,
    stats: &VocabStats,
    mode: ReplacementMode,
) -> Option<String> {
    lexicon
        .synonyms(word)
        .iter()
        .filter(|c| !c.is_empty() && c.as_str() != word)
        .filter(|c| !is_numeric(c))
        .filter(|c| !is_multi_token(c))
        .filter(|c| mode.admits(c, stats))
        .map(|c| (levenshtein(word, c), c))
        .max_by(|(da, a), (db, b)| da.cmp(db).then_with(|| b.cmp(a)))
        .map(|(_, c)| c.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Utterance;
    use proptest::prelude::*;

    /// Full-matrix Wagner–Fischer, kept independent of the two-row version.
    fn levenshtein_oracle(a: &str, b: &str) -> usize {
        let a: Vec<char> = a.chars().collect();
        let b: Vec<char> = b.chars().collect();
        let mut d = vec![vec![0usize; b.len() + 1]; a.len() + 1];
        for (i, row) in d.iter_mut().enumerate() {
            row[0] = i;
        }
        for j in 0..=b.len() {
            d[0][j] = j;
        }
        for i in 1..=a.len() {
            for j in 1..=b.len() {
                let cost = if a[i - 1] == b[j - 1] { 0 } else { 1 };
                d[i][j] = *[d[i - 1][j] + 1, d[i][j - 1] + 1, d[i - 1][j - 1] + cost]
                    .iter()
                    .min()
                    .unwrap();
            }
        }
        d[a.len()][b.len()]
    }

    fn dlg(id: &str, turns: &[&str]) -> Dialogue {
        Dialogue {
            id: id.into(),
            utterances: turns.iter().map(|t| Utterance::new(*t)).collect(),
        }
    }

    fn lex(word: &str, syns: &[&str]) -> SynonymLexicon {
        SynonymLexicon::from_records([LexiconRecord {
            word: word.into(),
            synonyms: syns.iter().map(|s| s.to_string()).collect(),
        }])
    }

    fn stats(pairs: &[(&str, u64)]) -> VocabStats {
        VocabStats::from_records(pairs.iter().map(|(w, c)| VocabRecord {
            word: w.to_string(),
            count: *c,
        }))
        .unwrap()
    }

    #[test]
    fn vocab_counts() {
        let s = build_vocab_stats(&[dlg("a", &["a b a"])]);
        assert_eq!(s.count("a"), 2);
        assert_eq!(s.count("b"), 1);
        assert_eq!(s.total_tokens(), 3);

        let e = build_vocab_stats(&[]);
        assert!(e.is_empty());
        assert_eq!(e.total_tokens(), 0);

        let s = build_vocab_stats(&[dlg("a", &["hi there", "hi"]), dlg("b", &["oh hi", "bye"])]);
        assert_eq!(s.count("hi"), 3);
        assert_eq!(s.total_tokens(), s.iter().map(|(_, c)| c).sum::<u64>());
    }

    #[test]
    fn levenshtein_examples() {
        assert_eq!(levenshtein("abc", "abc"), 0);
        assert_eq!(levenshtein_oracle("kitten", "sitting"), 3);
        assert_eq!(levenshtein("kitten", "sitting"), 3);
        assert_eq!(levenshtein("", "abcd"), 4);
        assert_eq!(levenshtein("abcd", ""), 4);
        assert_eq!(levenshtein("café", "cafe"), 1);
    }

    #[test]
    fn classify_boundaries() {
        let s = stats(&[("w", 5000), ("v", 5001), ("u", 3)]);
        assert_eq!(classify_word("absent", &s, 5000), WordClass::Unknown);
        assert_eq!(classify_word("w", &s, 5000), WordClass::Other);
        assert_eq!(classify_word("v", &s, 5000), WordClass::Known);
        assert_eq!(classify_word("u", &s, 5000), WordClass::Other);
    }

    #[test]
    fn rule_numbers() {
        let l = lex("2", &["two", "Two"]);
        assert_eq!(select_replacement("2", &l, &VocabStats::default(), ReplacementMode::unknown()), None);
        assert!(is_numeric("2.5") && is_numeric("-3") && is_numeric("Ninety"));
        assert!(!is_numeric("ones") && !is_numeric(".") && !is_numeric(""));
    }

    #[test]
    fn rule_multi_word() {
        let l = lex("computer", &["data-processor", "computing-machine"]);
        assert_eq!(
            select_replacement("computer", &l, &VocabStats::default(), ReplacementMode::unknown()),
            None
        );
        assert!(is_multi_token("ice cream") && is_multi_token("a_b") && is_multi_token("'tis"));
        assert!(!is_multi_token("don't"));
    }

    #[test]
    fn rule_farthest() {
        let l = lex("car", &["auto", "automobile"]);
        // delete c, keep a, r->u, insert t, o
        assert_eq!(levenshtein_oracle("car", "auto"), 4);
        assert_eq!(levenshtein_oracle("car", "automobile"), 10);
        assert_eq!(
            select_replacement("car", &l, &VocabStats::default(), ReplacementMode::unknown()).as_deref(),
            Some("automobile")
        );
    }

    #[test]
    fn rule_training_frequency() {
        let l = lex("car", &["auto", "automobile", "motor"]);
        let s = stats(&[("automobile", 1), ("motor", 10)]);
        assert_eq!(
            select_replacement("car", &l, &s, ReplacementMode::unknown()).as_deref(),
            Some("auto")
        );
        assert_eq!(
            select_replacement("car", &l, &s, ReplacementMode::known(9).unwrap()).as_deref(),
            Some("motor")
        );
        assert_eq!(select_replacement("car", &l, &s, ReplacementMode::known(10).unwrap()), None);
        assert!(ReplacementMode::known(0).is_err());
    }

    #[test]
    fn ties_break_lexicographically() {
        let l = lex("aa", &["zz", "bb", "yy"]);
        assert_eq!(
            select_replacement("aa", &l, &VocabStats::default(), ReplacementMode::unknown()).as_deref(),
            Some("bb")
        );
    }

    #[test]
    fn lexicon_drops_self_and_empty() {
        let l = lex("x", &["x", "", "y", "y"]);
        assert_eq!(l.synonyms("x"), ["y"]);
    }

    proptest! {
        #[test]
        fn levenshtein_is_metric(a in "[abc]{0,7}", b in "[abc]{0,7}", c in "[abc]{0,7}") {
            let ab = levenshtein(&a, &b);
            prop_assert_eq!(ab, levenshtein_oracle(&a, &b));
            prop_assert_eq!(ab, levenshtein(&b, &a));
            prop_assert_eq!(ab == 0, a == b);
            prop_assert!(levenshtein(&a, &c) <= ab + levenshtein(&b, &c));
        }

        #[test]
        fn selection_respects_rules(
            word in "[a-z]{1,6}",
            syns in proptest::collection::vec("[a-z0-9 \\-]{0,8}", 0..8),
            counts in proptest::collection::vec(0u64..20, 8),
            threshold in 1u64..15,
            known in any::<bool>(),
        ) {
            let l = SynonymLexicon::from_records([LexiconRecord { word: word.clone(), synonyms: syns.clone() }]);
            let recs: Vec<(String, u64)> = syns.iter().zip(&counts)
                .filter(|(_, &c)| c > 0)
                .map(|(s, &c)| (s.clone(), c))
                .collect::<BTreeMap<_, _>>()
                .into_iter()
                .collect();
            let s = VocabStats::from_records(recs.into_iter().map(|(word, count)| VocabRecord { word, count })).unwrap();
            let mode = if known { ReplacementMode::known(threshold).unwrap() } else { ReplacementMode::unknown() };
            let pick = select_replacement(&word, &l, &s, mode);
            prop_assert_eq!(&pick, &select_replacement(&word, &l, &s, mode));
            if let Some(p) = pick {
                prop_assert!(p != word);
                prop_assert!(!is_numeric(&p));
                prop_assert!(!p.contains(' ') && !p.contains('-'));
                if known { prop_assert!(s.count(&p) > threshold); } else { prop_assert_eq!(s.count(&p), 0); }
            }
        }
    }
}

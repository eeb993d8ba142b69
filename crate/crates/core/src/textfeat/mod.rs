//! Linguistic features of a lecture transcript.
//!
//! Fourteen features are computed from transcript, title and duration. Rate
//! features are per-word fractions; counts are recoverable via `word_count`.

mod lexicon;
mod readability;

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use lexicon::{LexiconSet, LEXICON_FILES};
pub use readability::{count_sentences, count_syllables, flesch_easiness};

pub const N_TEXT_FEATURES: usize = 14;

/// Column names in canonical order.
pub const FEATURE_NAMES: [&str; N_TEXT_FEATURES] = [
    "conjugate_rate",
    "pronoun_rate",
    "preposition_rate",
    "tobe_verb_rate",
    "auxiliary_rate",
    "normalization_rate",
    "fraction_stopword_coverage",
    "fraction_stopword_presence",
    "easiness",
    "document_entropy",
    "word_count",
    "title_word_count",
    "duration",
    "speaker_speed",
];

/// Index of each feature within [`FEATURE_NAMES`].
pub mod idx {
    pub const CONJUGATE_RATE: usize = 0;
    pub const PRONOUN_RATE: usize = 1;
    pub const PREPOSITION_RATE: usize = 2;
    pub const TOBE_VERB_RATE: usize = 3;
    pub const AUXILIARY_RATE: usize = 4;
    pub const NORMALIZATION_RATE: usize = 5;
    pub const FRACTION_STOPWORD_COVERAGE: usize = 6;
    pub const FRACTION_STOPWORD_PRESENCE: usize = 7;
    pub const EASINESS: usize = 8;
    pub const DOCUMENT_ENTROPY: usize = 9;
    pub const WORD_COUNT: usize = 10;
    pub const TITLE_WORD_COUNT: usize = 11;
    pub const DURATION: usize = 12;
    pub const SPEAKER_SPEED: usize = 13;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TextFeatureVector {
    pub conjugate_rate: f64,
    pub pronoun_rate: f64,
    pub preposition_rate: f64,
    pub tobe_verb_rate: f64,
    pub auxiliary_rate: f64,
    pub normalization_rate: f64,
    pub fraction_stopword_coverage: f64,
    pub fraction_stopword_presence: f64,
    pub easiness: f64,
    /// Bits.
    pub document_entropy: f64,
    pub word_count: f64,
    pub title_word_count: f64,
    /// Seconds.
    pub duration: f64,
    /// Words per minute.
    pub speaker_speed: f64,
}

impl TextFeatureVector {
    pub fn to_array(&self) -> [f64; N_TEXT_FEATURES] {
        [
            self.conjugate_rate,
            self.pronoun_rate,
            self.preposition_rate,
            self.tobe_verb_rate,
            self.auxiliary_rate,
            self.normalization_rate,
            self.fraction_stopword_coverage,
            self.fraction_stopword_presence,
            self.easiness,
            self.document_entropy,
            self.word_count,
            self.title_word_count,
            self.duration,
            self.speaker_speed,
        ]
    }

    pub fn from_array(v: [f64; N_TEXT_FEATURES]) -> Self {
        Self {
            conjugate_rate: v[0],
            pronoun_rate: v[1],
            preposition_rate: v[2],
            tobe_verb_rate: v[3],
            auxiliary_rate: v[4],
            normalization_rate: v[5],
            fraction_stopword_coverage: v[6],
            fraction_stopword_presence: v[7],
            easiness: v[8],
            document_entropy: v[9],
            word_count: v[10],
            title_word_count: v[11],
            duration: v[12],
            speaker_speed: v[13],
        }
    }

    pub fn from_slice(v: &[f64]) -> Result<Self> {
        let arr: [f64; N_TEXT_FEATURES] = v.try_into().map_err(|_| {
            Error::invalid(format!(
                "expected {N_TEXT_FEATURES} features, got {}",
                v.len()
            ))
        })?;
        Ok(Self::from_array(arr))
    }
}

fn is_apostrophe(c: char) -> bool {
    c == '\'' || c == '\u{2019}'
}

/// Lowercase word tokens. Splits on anything that is not a letter, a digit or an
/// apostrophe between two alphanumerics. Curly apostrophes become `'`.
pub fn tokenize(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let mut current = String::new();
    for (i, &c) in chars.iter().enumerate() {
        if c.is_alphanumeric() {
            current.extend(c.to_lowercase());
        } else if is_apostrophe(c)
            && !current.is_empty()
            && chars.get(i + 1).is_some_and(|n| n.is_alphanumeric())
        {
            current.push('\'');
        } else if !current.is_empty() {
            tokens.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

fn count_auxiliaries(tokens: &[String], lex: &LexiconSet) -> usize {
    let mut consumed = vec![false; tokens.len()];
    let mut count = 0;
    let mut i = 0;
    while i + 1 < tokens.len() {
        let pair = (tokens[i].clone(), tokens[i + 1].clone());
        if lex.auxiliary_bigrams.contains(&pair) {
            consumed[i] = true;
            consumed[i + 1] = true;
            count += 1;
            i += 2;
        } else {
            i += 1;
        }
    }
    count
        + tokens
            .iter()
            .zip(&consumed)
            .filter(|(t, used)| !**used && lex.auxiliaries.contains(t.as_str()))
            .count()
}

fn is_normalization(token: &str, lex: &LexiconSet) -> bool {
    lex.normalization_suffixes
        .iter()
        .any(|s| token.len() > s.len() && token.ends_with(s.as_str()))
}

/// Shannon entropy (bits) of the maximum-likelihood unigram distribution.
pub fn unigram_entropy(tokens: &[String]) -> f64 {
    if tokens.is_empty() {
        return 0.0;
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in tokens {
        *counts.entry(t.as_str()).or_default() += 1;
    }
    let n = tokens.len() as f64;
    // sorted so the summation order does not depend on hash iteration order
    let mut c: Vec<usize> = counts.into_values().collect();
    c.sort_unstable();
    c.into_iter()
        .map(|k| {
            let p = k as f64 / n;
            -p * p.log2()
        })
        .sum()
}

pub fn extract_text_features(
    transcript: &str,
    title: &str,
    duration: f64,
    lex: &LexiconSet,
) -> Result<TextFeatureVector> {
    if !(duration > 0.0) || !duration.is_finite() {
        return Err(Error::invalid(format!(
            "duration must be positive, got {duration}"
        )));
    }
    let tokens = tokenize(transcript);
    let word_count = tokens.len();
    let title_word_count = tokenize(title).len() as f64;
    let speaker_speed = word_count as f64 / (duration / 60.0);

    if word_count == 0 {
        return Ok(TextFeatureVector {
            conjugate_rate: 0.0,
            pronoun_rate: 0.0,
            preposition_rate: 0.0,
            tobe_verb_rate: 0.0,
            auxiliary_rate: 0.0,
            normalization_rate: 0.0,
            fraction_stopword_coverage: 0.0,
            fraction_stopword_presence: 0.0,
            easiness: flesch_easiness(transcript),
            document_entropy: 0.0,
            word_count: 0.0,
            title_word_count,
            duration,
            speaker_speed,
        });
    }

    let n = word_count as f64;
    let rate = |set: &HashSet<String>| {
        tokens.iter().filter(|t| set.contains(t.as_str())).count() as f64 / n
    };
    let stop_tokens = tokens
        .iter()
        .filter(|t| lex.stopwords.contains(t.as_str()))
        .count();
    let distinct_stop: HashSet<&str> = tokens
        .iter()
        .map(String::as_str)
        .filter(|t| lex.stopwords.contains(*t))
        .collect();

    Ok(TextFeatureVector {
        conjugate_rate: rate(&lex.conjunctions),
        pronoun_rate: rate(&lex.pronouns),
        preposition_rate: rate(&lex.prepositions),
        tobe_verb_rate: rate(&lex.tobe_verbs),
        auxiliary_rate: count_auxiliaries(&tokens, lex) as f64 / n,
        normalization_rate: tokens.iter().filter(|t| is_normalization(t, lex)).count() as f64 / n,
        fraction_stopword_coverage: distinct_stop.len() as f64 / lex.stopwords.len() as f64,
        fraction_stopword_presence: stop_tokens as f64 / n,
        easiness: flesch_easiness(transcript),
        document_entropy: unigram_entropy(&tokens),
        word_count: n,
        title_word_count,
        duration,
        speaker_speed,
    })
}

//! Text-emotion branch: a bag-of-words softmax classifier over the five text
//! emotion classes, leave-one-token-out attributions, and an adapter for
//! probabilities computed by an external model.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::emotion::{argmax, softmax, EmotionDistribution, TEXT_EMOTIONS};
use crate::error::{Error, Result};
use crate::seed::rng_from_seed;
use crate::textfeat::tokenize;

pub const N_TEXT_CLASSES: usize = TEXT_EMOTIONS.len();
pub const TEXT_MODEL_FORMAT_VERSION: u32 = 1;
/// Accepted band for the sum of externally supplied probabilities.
pub const EXTERNAL_SUM_BAND: (f64, f64) = (0.99, 1.01);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TextEmotionConfig {
    /// L2 penalty on weights and biases.
    pub l2: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    /// Standard deviation of the random initial weights.
    pub init_std: f64,
}

impl Default for TextEmotionConfig {
    fn default() -> Self {
        Self {
            l2: 1e-4,
            learning_rate: 0.5,
            epochs: 300,
            init_std: 0.01,
        }
    }
}

impl TextEmotionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.l2 >= 0.0) || !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid(
                "text emotion l2 must be >= 0 and learning_rate > 0",
            ));
        }
        if !(self.init_std >= 0.0 && self.init_std.is_finite()) {
            return Err(Error::invalid(
                "text emotion init_std must be finite and >= 0",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TextEmotionModel {
    pub format_version: u32,
    pub classes: Vec<String>,
    pub seed: u64,
    /// Token of each weight row, sorted.
    pub vocabulary: Vec<String>,
    /// One row of class weights per vocabulary token.
    pub weights: Vec<[f64; N_TEXT_CLASSES]>,
    pub bias: [f64; N_TEXT_CLASSES],
    #[serde(skip)]
    index: BTreeMap<String, usize>,
}

/// Document-level prediction; `empty` marks a transcript without words, for
/// which the distribution is uniform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextEmotionPrediction {
    pub distribution: EmotionDistribution,
    pub sentences: usize,
    pub empty: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenAttribution {
    pub token: String,
    pub score: f64,
}

pub fn text_label_index(label: &str) -> Option<usize> {
    let l = label.trim().to_ascii_lowercase();
    TEXT_EMOTIONS.iter().position(|c| *c == l)
}

/// Splits on `.`, `!` and `?`, dropping pieces without any word.
pub fn split_sentences(text: &str) -> Vec<&str> {
    text.split(['.', '!', '?'])
        .filter(|s| !tokenize(s).is_empty())
        .collect()
}

impl TextEmotionModel {
    /// Model with every weight and bias zero over `vocabulary`.
    pub fn zeros(vocabulary: Vec<String>, seed: u64) -> Result<Self> {
        let n = vocabulary.len();
        Self::from_parts(
            vocabulary,
            vec![[0.0; N_TEXT_CLASSES]; n],
            [0.0; N_TEXT_CLASSES],
            seed,
        )
    }

    pub fn from_parts(
        vocabulary: Vec<String>,
        weights: Vec<[f64; N_TEXT_CLASSES]>,
        bias: [f64; N_TEXT_CLASSES],
        seed: u64,
    ) -> Result<Self> {
        let mut model = Self {
            format_version: TEXT_MODEL_FORMAT_VERSION,
            classes: TEXT_EMOTIONS.iter().map(|s| s.to_string()).collect(),
            seed,
            vocabulary,
            weights,
            bias,
            index: BTreeMap::new(),
        };
        model.rebuild_index()?;
        Ok(model)
    }

    fn rebuild_index(&mut self) -> Result<()> {
        if self.format_version != TEXT_MODEL_FORMAT_VERSION {
            return Err(Error::FormatVersion {
                found: self.format_version,
                expected: TEXT_MODEL_FORMAT_VERSION,
            });
        }
        if self.classes.iter().map(String::as_str).ne(TEXT_EMOTIONS) {
            return Err(Error::invalid(
                "text model class order differs from the text emotion classes",
            ));
        }
        if self.weights.len() != self.vocabulary.len() {
            return Err(Error::invalid(
                "text model has one weight row per vocabulary token",
            ));
        }
        let finite = self
            .weights
            .iter()
            .flatten()
            .chain(&self.bias)
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Numeric(
                "text model contains non-finite weights".into(),
            ));
        }
        self.index = self
            .vocabulary
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        if self.index.len() != self.vocabulary.len() {
            return Err(Error::invalid("text model vocabulary has duplicate tokens"));
        }
        Ok(())
    }

    pub fn token_index(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    /// Class logits of a token multiset.
    pub fn logits_of_tokens<S: AsRef<str>>(&self, tokens: &[S]) -> [f64; N_TEXT_CLASSES] {
        let mut z = self.bias;
        for t in tokens {
            if let Some(i) = self.token_index(t.as_ref()) {
                for (zc, w) in z.iter_mut().zip(&self.weights[i]) {
                    *zc += w;
                }
            }
        }
        z
    }

    pub fn logits(&self, sentence: &str) -> [f64; N_TEXT_CLASSES] {
        self.logits_of_tokens(&tokenize(sentence))
    }

    pub fn sentence_probs(&self, sentence: &str) -> Vec<f64> {
        softmax(&self.logits(sentence))
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::json("text emotion model", e))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mut model: Self =
            serde_json::from_str(text).map_err(|e| Error::json("text emotion model", e))?;
        model.rebuild_index()?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = self.to_json()?;
        text.push('\n');
        crate::io::write_bytes_atomic(path, text.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&crate::io::read_to_string(path)?)
    }
}

/// Multinomial logistic regression on unigram counts, trained by full-batch
/// gradient descent on mean cross-entropy. The L2 term is applied as a
/// proximal (shrinkage) step, which stays stable for any penalty strength.
pub fn train_text_emotion(
    corpus: &[(String, usize)],
    config: &TextEmotionConfig,
    seed: u64,
) -> Result<TextEmotionModel> {
    config.validate()?;
    if corpus.is_empty() {
        return Err(Error::invalid("text emotion corpus is empty"));
    }
    if let Some((_, bad)) = corpus.iter().find(|(_, c)| *c >= N_TEXT_CLASSES) {
        return Err(Error::invalid(format!(
            "text class index {bad} out of range"
        )));
    }
    let present: BTreeSet<usize> = corpus.iter().map(|(_, c)| *c).collect();
    if present.len() < 2 {
        return Err(Error::invalid(
            "text emotion corpus needs at least two classes",
        ));
    }

    let tokenized: Vec<Vec<String>> = corpus.iter().map(|(t, _)| tokenize(t)).collect();
    let vocabulary: Vec<String> = tokenized
        .iter()
        .flatten()
        .cloned()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut model = TextEmotionModel::zeros(vocabulary, seed)?;
    if config.init_std > 0.0 {
        let normal =
            Normal::new(0.0, config.init_std).map_err(|e| Error::invalid(e.to_string()))?;
        let mut rng = rng_from_seed(seed);
        for row in &mut model.weights {
            for w in row.iter_mut() {
                *w = normal.sample(&mut rng);
            }
        }
    }
    // Sparse count rows: (token index, count).
    let rows: Vec<Vec<(usize, f64)>> = tokenized
        .iter()
        .map(|toks| {
            let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
            for t in toks {
                *counts
                    .entry(model.token_index(t).expect("token in vocabulary"))
                    .or_default() += 1.0;
            }
            counts.into_iter().collect()
        })
        .collect();

    let n = corpus.len() as f64;
    let shrink = 1.0 / (1.0 + config.learning_rate * config.l2);
    for _ in 0..config.epochs {
        let mut g_w = vec![[0.0; N_TEXT_CLASSES]; model.weights.len()];
        let mut g_b = [0.0; N_TEXT_CLASSES];
        for (row, (_, label)) in rows.iter().zip(corpus) {
            let mut z = model.bias;
            for &(i, c) in row {
                for (zk, w) in z.iter_mut().zip(&model.weights[i]) {
                    *zk += c * w;
                }
            }
            let p = softmax(&z);
            for k in 0..N_TEXT_CLASSES {
                let d = (p[k] - if k == *label { 1.0 } else { 0.0 }) / n;
                g_b[k] += d;
                for &(i, c) in row {
                    g_w[i][k] += d * c;
                }
            }
        }
        for (w, g) in model.weights.iter_mut().zip(&g_w) {
            for k in 0..N_TEXT_CLASSES {
                w[k] = (w[k] - config.learning_rate * g[k]) * shrink;
            }
        }
        for (b, g) in model.bias.iter_mut().zip(&g_b) {
            *b = (*b - config.learning_rate * g) * shrink;
        }
    }
    model.rebuild_index()?;
    Ok(model)
}

/// Fraction of `corpus` whose most probable class is its label.
pub fn text_accuracy(model: &TextEmotionModel, corpus: &[(String, usize)]) -> f64 {
    if corpus.is_empty() {
        return 0.0;
    }
    let hits = corpus
        .iter()
        .filter(|(t, c)| argmax(&model.logits(t)) == *c)
        .count();
    hits as f64 / corpus.len() as f64
}

/// Mean of the per-sentence distributions.
pub fn predict_text_emotion(model: &TextEmotionModel, transcript: &str) -> TextEmotionPrediction {
    let sentences = split_sentences(transcript);
    if sentences.is_empty() {
        log::warn!("transcript has no words; using a uniform text emotion distribution");
        return TextEmotionPrediction {
            distribution: EmotionDistribution::uniform(N_TEXT_CLASSES),
            sentences: 0,
            empty: true,
        };
    }
    let mut mean = vec![0.0; N_TEXT_CLASSES];
    for s in &sentences {
        for (m, p) in mean.iter_mut().zip(model.sentence_probs(s)) {
            *m += p;
        }
    }
    let k = sentences.len() as f64;
    mean.iter_mut().for_each(|m| *m /= k);
    TextEmotionPrediction {
        distribution: EmotionDistribution::new(mean).expect("mean of distributions"),
        sentences: sentences.len(),
        empty: false,
    }
}

/// For each token of `sentence`, the drop in the `class` logit when that one
/// occurrence is removed. Positive scores push toward the class.
pub fn token_attribution(
    model: &TextEmotionModel,
    sentence: &str,
    class: usize,
) -> Result<Vec<TokenAttribution>> {
    if class >= N_TEXT_CLASSES {
        return Err(Error::invalid(format!(
            "text class index {class} out of range"
        )));
    }
    let tokens = tokenize(sentence);
    let full = model.logits_of_tokens(&tokens)[class];
    Ok((0..tokens.len())
        .map(|i| {
            let mut rest = tokens.clone();
            let token = rest.remove(i);
            TokenAttribution {
                score: full - model.logits_of_tokens(&rest)[class],
                token,
            }
        })
        .collect())
}

/// Reads `{class: probability}` for all five text classes. Sums inside
/// [`EXTERNAL_SUM_BAND`] are renormalized; anything else is rejected.
pub fn parse_external_emotion_probs(text: &str, context: &str) -> Result<EmotionDistribution> {
    let map: BTreeMap<String, f64> =
        serde_json::from_str(text).map_err(|e| Error::json(context, e))?;
    if let Some(extra) = map.keys().find(|k| !TEXT_EMOTIONS.contains(&k.as_str())) {
        return Err(Error::invalid(format!(
            "{context}: unknown emotion `{extra}`"
        )));
    }
    let probs = TEXT_EMOTIONS
        .iter()
        .map(|c| {
            map.get(*c)
                .copied()
                .ok_or_else(|| Error::MissingColumn(format!("{context}: {c}")))
        })
        .collect::<Result<Vec<f64>>>()?;
    if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
        return Err(Error::invalid(format!(
            "{context}: probabilities must be finite and nonnegative"
        )));
    }
    let sum: f64 = probs.iter().sum();
    if !(EXTERNAL_SUM_BAND.0..=EXTERNAL_SUM_BAND.1).contains(&sum) {
        return Err(Error::invalid(format!(
            "{context}: probabilities sum to {sum}, outside [{}, {}]",
            EXTERNAL_SUM_BAND.0, EXTERNAL_SUM_BAND.1
        )));
    }
    EmotionDistribution::new(probs.into_iter().map(|p| p / sum).collect())
}

pub fn load_external_emotion_probs(path: &Path) -> Result<EmotionDistribution> {
    parse_external_emotion_probs(
        &crate::io::read_to_string(path)?,
        &path.display().to_string(),
    )
}

/// Reads a `text,label` CSV (column order free; `sentence` and `emotion`
/// accepted as aliases) into `(text, class index)` pairs.
pub fn read_text_corpus<R: std::io::Read>(
    reader: R,
    context: &str,
) -> Result<Vec<(String, usize)>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::csv(context, e))?.clone();
    let find = |names: &[&str]| {
        headers
            .iter()
            .position(|h| names.contains(&h.trim().to_ascii_lowercase().as_str()))
    };
    let text_col =
        find(&["text", "sentence"]).ok_or_else(|| Error::MissingColumn("text".into()))?;
    let label_col =
        find(&["label", "emotion"]).ok_or_else(|| Error::MissingColumn("label".into()))?;
    rdr.records()
        .enumerate()
        .map(|(row, rec)| {
            let rec = rec.map_err(|e| Error::csv(context, e))?;
            let label = rec.get(label_col).unwrap_or("");
            let class = text_label_index(label).ok_or_else(|| Error::BadRow {
                row,
                message: format!("unknown text emotion `{label}`"),
            })?;
            Ok((rec.get(text_col).unwrap_or("").to_string(), class))
        })
        .collect()
}

pub fn load_text_corpus(path: &Path) -> Result<Vec<(String, usize)>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_text_corpus(file, &path.display().to_string())
}

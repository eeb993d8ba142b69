//! Word lists used for closed-class lexicon matching.

use std::collections::HashSet;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

const CONJUNCTIONS: &str = include_str!("../../lexicons/conjunctions.txt");
const PRONOUNS: &str = include_str!("../../lexicons/pronouns.txt");
const PREPOSITIONS: &str = include_str!("../../lexicons/prepositions.txt");
const TOBE_VERBS: &str = include_str!("../../lexicons/tobe_verbs.txt");
const AUXILIARIES: &str = include_str!("../../lexicons/auxiliaries.txt");
const STOPWORDS: &str = include_str!("../../lexicons/stopwords.txt");
const SUFFIXES: &str = include_str!("../../lexicons/normalization_suffixes.txt");

/// File names, in the order they are hashed into the version string.
pub const LEXICON_FILES: [&str; 7] = [
    "conjunctions.txt",
    "pronouns.txt",
    "prepositions.txt",
    "tobe_verbs.txt",
    "auxiliaries.txt",
    "stopwords.txt",
    "normalization_suffixes.txt",
];

#[derive(Debug, Clone)]
pub struct LexiconSet {
    pub conjunctions: HashSet<String>,
    pub pronouns: HashSet<String>,
    pub prepositions: HashSet<String>,
    pub tobe_verbs: HashSet<String>,
    /// Single-word auxiliaries.
    pub auxiliaries: HashSet<String>,
    /// Two-word auxiliaries such as "need to", matched before single words.
    pub auxiliary_bigrams: HashSet<(String, String)>,
    pub stopwords: HashSet<String>,
    pub normalization_suffixes: Vec<String>,
    /// Hex digest over the raw lexicon files.
    pub version: String,
}

impl LexiconSet {
    /// The lexicons compiled into the crate.
    pub fn builtin() -> Self {
        Self::from_sources([
            CONJUNCTIONS,
            PRONOUNS,
            PREPOSITIONS,
            TOBE_VERBS,
            AUXILIARIES,
            STOPWORDS,
            SUFFIXES,
        ])
        .expect("builtin lexicons are valid")
    }

    /// Loads the seven lexicon files from `dir` (see [`LEXICON_FILES`]).
    pub fn from_dir(dir: &Path) -> Result<Self> {
        let mut sources = Vec::with_capacity(LEXICON_FILES.len());
        for name in LEXICON_FILES {
            let path = dir.join(name);
            sources.push(std::fs::read_to_string(&path).map_err(|e| Error::io(path, e))?);
        }
        let refs: [&str; 7] = std::array::from_fn(|i| sources[i].as_str());
        Self::from_sources(refs)
    }

    fn from_sources(sources: [&str; 7]) -> Result<Self> {
        let mut hasher = Sha256::new();
        for (name, src) in LEXICON_FILES.iter().zip(sources.iter()) {
            hasher.update(name.as_bytes());
            hasher.update([0u8]);
            hasher.update(src.as_bytes());
        }
        let version = hex::encode(&hasher.finalize()[..8]);

        let lists: Vec<Vec<String>> = sources
            .iter()
            .zip(LEXICON_FILES)
            .map(|(src, name)| parse_list(src, name))
            .collect::<Result<_>>()?;

        let mut auxiliaries = HashSet::new();
        let mut auxiliary_bigrams = HashSet::new();
        for entry in &lists[4] {
            let parts: Vec<&str> = entry.split_whitespace().collect();
            match parts.as_slice() {
                [w] => {
                    auxiliaries.insert((*w).to_string());
                }
                [a, b] => {
                    auxiliary_bigrams.insert(((*a).to_string(), (*b).to_string()));
                }
                _ => {
                    return Err(Error::invalid(format!(
                        "auxiliary entry `{entry}` has more than two words"
                    )))
                }
            }
        }

        let set = |i: usize| lists[i].iter().cloned().collect::<HashSet<_>>();
        Ok(Self {
            conjunctions: set(0),
            pronouns: set(1),
            prepositions: set(2),
            tobe_verbs: set(3),
            auxiliaries,
            auxiliary_bigrams,
            stopwords: set(5),
            normalization_suffixes: lists[6].clone(),
            version,
        })
    }
}

fn parse_list(src: &str, name: &str) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for line in src.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if line.chars().any(|c| c.is_uppercase()) {
            return Err(Error::invalid(format!(
                "lexicon {name}: entry `{line}` is not lowercase"
            )));
        }
        if !out.iter().any(|w: &String| w == line) {
            out.push(line.to_string());
        }
    }
    if out.is_empty() {
        return Err(Error::invalid(format!("lexicon {name} is empty")));
    }
    Ok(out)
}

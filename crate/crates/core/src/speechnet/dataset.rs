//! Labeled speech clips: a CSV index of `path,label` rows next to WAV files.

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::train::SpeechDataset;
use crate::corpus::read_wav_mono;
use crate::dsp::{speech_feature_vector, DspConfig};
use crate::emotion::SPEECH_EMOTIONS;
use crate::error::{Error, Result};

const PATH_COLUMNS: [&str; 3] = ["path", "file", "filename"];
const LABEL_COLUMNS: [&str; 3] = ["label", "emotion", "class"];

/// Class index of a speech label; accepts the canonical names in any case
/// plus the noun forms `fear` and `surprise`.
pub fn speech_label_index(label: &str) -> Option<usize> {
    let l = label.trim().to_ascii_lowercase();
    let l = match l.as_str() {
        "fear" => "fearful",
        "surprise" => "surprised",
        other => other,
    };
    SPEECH_EMOTIONS.iter().position(|c| *c == l)
}

/// Index rows as `(resolved path, class index)`; relative paths are taken
/// from the index file's directory.
pub fn read_speech_index(index: &Path) -> Result<Vec<(PathBuf, usize)>> {
    let ctx = index.display().to_string();
    let mut reader = csv::Reader::from_path(index).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(index, io),
        other => Error::csv(&ctx, format!("{other:?}")),
    })?;
    let headers = reader.headers().map_err(|e| Error::csv(&ctx, e))?.clone();
    let find = |names: &[&str]| {
        headers
            .iter()
            .position(|h| names.contains(&h.trim().to_ascii_lowercase().as_str()))
    };
    let path_col = find(&PATH_COLUMNS).ok_or_else(|| Error::MissingColumn("path".into()))?;
    let label_col = find(&LABEL_COLUMNS).ok_or_else(|| Error::MissingColumn("label".into()))?;
    let base = index.parent().unwrap_or(Path::new("."));
    let mut rows = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::csv(&ctx, e))?;
        let path = record.get(path_col).unwrap_or("").trim();
        let label = record.get(label_col).unwrap_or("");
        if path.is_empty() {
            return Err(Error::BadRow {
                row,
                message: "empty path".into(),
            });
        }
        let class = speech_label_index(label).ok_or_else(|| Error::BadRow {
            row,
            message: format!("unknown speech label `{label}`"),
        })?;
        rows.push((base.join(path), class));
    }
    Ok(rows)
}

/// Decodes every clip of the index and turns it into one 180-dim feature
/// vector over the whole clip.
pub fn load_speech_dataset(index: &Path, dsp: &DspConfig) -> Result<SpeechDataset> {
    let rows = read_speech_index(index)?;
    let features = rows
        .par_iter()
        .map(|(path, _)| {
            let audio = read_wav_mono(path, dsp.sample_rate)?;
            Ok(speech_feature_vector(&audio, dsp)?.as_slice().to_vec())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SpeechDataset {
        features,
        labels: rows.into_iter().map(|(_, c)| c).collect(),
    })
}

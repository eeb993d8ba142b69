//! Lecture bundles, detection timelines and feature tables: the on-disk inputs
//! of every other module.

use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::textfeat::{TextFeatureVector, FEATURE_NAMES, N_TEXT_FEATURES};

pub const DEFAULT_SAMPLE_RATE: u32 = 22_050;
/// Allowed relative mismatch between decoded audio length and declared duration.
pub const DURATION_TOLERANCE: f64 = 0.10;
pub const LABEL_COLUMN: &str = "median_engagement";

/// One detector record, as written to JSON Lines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionRecord {
    pub t: f64,
    pub label: String,
    pub confidence: f64,
}

/// Time-sorted detector output for one lecture.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DetectionTimeline {
    events: Vec<DetectionRecord>,
}

impl DetectionTimeline {
    /// Validates each record and sorts by time (stable).
    pub fn new(mut events: Vec<DetectionRecord>, duration: Option<f64>) -> Result<Self> {
        for (i, e) in events.iter().enumerate() {
            if !e.t.is_finite() || e.t < 0.0 {
                return Err(Error::BadRow {
                    row: i,
                    message: format!("detection time {} is negative or not finite", e.t),
                });
            }
            if let Some(d) = duration {
                if e.t > d {
                    return Err(Error::BadRow {
                        row: i,
                        message: format!("detection time {} exceeds duration {d}", e.t),
                    });
                }
            }
            if !(0.0..=1.0).contains(&e.confidence) {
                return Err(Error::BadRow {
                    row: i,
                    message: format!("confidence {} outside [0,1]", e.confidence),
                });
            }
        }
        events.sort_by(|a, b| a.t.total_cmp(&b.t));
        Ok(Self { events })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn events(&self) -> &[DetectionRecord] {
        &self.events
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

/// Reads a JSON Lines detection file. Blank lines are skipped.
pub fn load_detections(path: &Path, duration: Option<f64>) -> Result<DetectionTimeline> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut events = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: DetectionRecord = serde_json::from_str(&line)
            .map_err(|e| Error::json(format!("{} line {}", path.display(), i + 1), e))?;
        events.push(rec);
    }
    DetectionTimeline::new(events, duration)
}

/// On-disk description of one lecture. Relative paths resolve against the
/// manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LectureManifest {
    pub id: String,
    pub title: String,
    pub transcript_path: PathBuf,
    pub audio_path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detections_path: Option<PathBuf>,
    pub duration_seconds: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rating: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rating_scale_max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LectureBundle {
    pub id: String,
    pub title: String,
    pub transcript: String,
    /// Mono samples in [-1, 1].
    pub audio: Vec<f64>,
    pub sample_rate: u32,
    pub detections: DetectionTimeline,
    pub duration: f64,
    /// Normalized rating in [0, 1].
    pub rating: Option<f64>,
}

impl LectureBundle {
    /// Checks the bundle invariants: positive duration, audio length within
    /// tolerance of the duration, rating in [0, 1].
    pub fn validate(&self) -> Result<()> {
        if !(self.duration > 0.0) || !self.duration.is_finite() {
            return Err(Error::invalid(format!(
                "lecture {}: duration must be positive, got {}",
                self.id, self.duration
            )));
        }
        if !self.audio.is_empty() {
            let audio_seconds = self.audio.len() as f64 / self.sample_rate as f64;
            let rel = (audio_seconds - self.duration).abs() / self.duration;
            if rel > DURATION_TOLERANCE {
                return Err(Error::invalid(format!(
                    "lecture {}: audio lasts {audio_seconds:.3} s but manifest declares {} s ({:.1}% mismatch, limit {:.0}%)",
                    self.id,
                    self.duration,
                    rel * 100.0,
                    DURATION_TOLERANCE * 100.0
                )));
            }
        }
        if let Some(r) = self.rating {
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::invalid(format!(
                    "lecture {}: normalized rating {r} outside [0,1]",
                    self.id
                )));
            }
        }
        Ok(())
    }
}

/// Maps a raw rating onto [0, 1] by dividing by the scale maximum.
pub fn normalize_rating(raw: f64, scale_max: f64) -> Result<f64> {
    if !(scale_max > 0.0) || !scale_max.is_finite() {
        return Err(Error::invalid(format!(
            "rating scale maximum must be positive, got {scale_max}"
        )));
    }
    if !(0.0..=scale_max).contains(&raw) {
        return Err(Error::invalid(format!(
            "rating {raw} outside [0, {scale_max}]"
        )));
    }
    Ok(raw / scale_max)
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

pub fn read_manifest(path: &Path) -> Result<LectureManifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))
}

/// Loads a lecture from its manifest, decoding audio to mono at `sample_rate`.
pub fn load_lecture_bundle(manifest_path: &Path, sample_rate: u32) -> Result<LectureBundle> {
    let manifest = read_manifest(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));

    let transcript_path = resolve(base, &manifest.transcript_path);
    let transcript =
        std::fs::read_to_string(&transcript_path).map_err(|e| Error::io(&transcript_path, e))?;
    let audio_path = resolve(base, &manifest.audio_path);
    let audio = read_wav_mono(&audio_path, sample_rate)?;

    let rating = match (manifest.rating, manifest.rating_scale_max) {
        (Some(r), Some(max)) => Some(normalize_rating(r, max)?),
        (Some(_), None) => {
            return Err(Error::invalid(format!(
                "lecture {}: rating given without rating_scale_max",
                manifest.id
            )))
        }
        (None, _) => None,
    };

    let duration = manifest.duration_seconds;
    let detections = match &manifest.detections_path {
        Some(p) => load_detections(&resolve(base, p), Some(duration))?,
        None => DetectionTimeline::empty(),
    };

    let bundle = LectureBundle {
        id: manifest.id,
        title: manifest.title,
        transcript,
        audio,
        sample_rate,
        detections,
        duration,
        rating,
    };
    bundle.validate()?;
    Ok(bundle)
}

/// Decodes a PCM WAV file to mono f64 samples at `target_rate`.
///
/// Integer PCM of any bit depth and 32-bit float are accepted; channels are
/// averaged and the result resampled by linear interpolation.
pub fn read_wav_mono(path: &Path, target_rate: u32) -> Result<Vec<f64>> {
    let wav_err = |e: hound::Error| match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::Wav {
            path: path.to_path_buf(),
            message: other.to_string(),
        },
    };
    let mut reader = hound::WavReader::open(path).map_err(wav_err)?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if channels == 0 {
        return Err(Error::Wav {
            path: path.to_path_buf(),
            message: "zero channels".into(),
        });
    }
    let interleaved: Vec<f64> = match spec.sample_format {
        hound::SampleFormat::Int => {
            let scale = (1i64 << (spec.bits_per_sample - 1)) as f64;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f64 / scale))
                .collect::<std::result::Result<_, _>>()
                .map_err(wav_err)?
        }
        hound::SampleFormat::Float => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()
            .map_err(wav_err)?,
    };
    let mono: Vec<f64> = interleaved
        .chunks_exact(channels)
        .map(|frame| frame.iter().sum::<f64>() / channels as f64)
        .collect();
    Ok(resample_linear(&mono, spec.sample_rate, target_rate))
}

/// Linear-interpolation resampling. Output length is `round(len * to / from)`.
pub fn resample_linear(samples: &[f64], from: u32, to: u32) -> Vec<f64> {
    if from == to || samples.is_empty() {
        return samples.to_vec();
    }
    let ratio = from as f64 / to as f64;
    let out_len = ((samples.len() as f64) * to as f64 / from as f64).round() as usize;
    let last = samples.len() - 1;
    (0..out_len)
        .map(|i| {
            let pos = i as f64 * ratio;
            let j = pos.floor() as usize;
            if j >= last {
                samples[last]
            } else {
                let frac = pos - j as f64;
                samples[j] * (1.0 - frac) + samples[j + 1] * frac
            }
        })
        .collect()
}

/// Rows of text features with their engagement labels.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub rows: Vec<(TextFeatureVector, f64)>,
}

impl FeatureTable {
    pub fn new(rows: Vec<(TextFeatureVector, f64)>) -> Result<Self> {
        for (i, (_, label)) in rows.iter().enumerate() {
            if !(0.0..=1.0).contains(label) {
                return Err(Error::BadRow {
                    row: i,
                    message: format!("label {label} outside [0,1]"),
                });
            }
        }
        Ok(Self { rows })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn features(&self) -> Vec<[f64; N_TEXT_FEATURES]> {
        self.rows.iter().map(|(f, _)| f.to_array()).collect()
    }

    pub fn labels(&self) -> Vec<f64> {
        self.rows.iter().map(|(_, y)| *y).collect()
    }
}

/// Parses a feature table from CSV. Columns may appear in any order and extra
/// columns are ignored. Row indices in errors are zero-based data rows.
pub fn read_feature_table<R: std::io::Read>(reader: R, context: &str) -> Result<FeatureTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::csv(context, e))?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let feature_cols: Vec<usize> = FEATURE_NAMES
        .iter()
        .map(|n| find(n))
        .collect::<Result<_>>()?;
    let label_col = find(LABEL_COLUMN)?;

    let mut rows = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| Error::csv(context, e))?;
        let cell = |col: usize, name: &str| -> Result<f64> {
            let raw = record.get(col).unwrap_or("");
            raw.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::BadRow {
                    row,
                    message: format!("column `{name}`: `{raw}` is not a finite number"),
                })
        };
        let mut values = [0.0; N_TEXT_FEATURES];
        for (k, &col) in feature_cols.iter().enumerate() {
            values[k] = cell(col, FEATURE_NAMES[k])?;
        }
        let label = cell(label_col, LABEL_COLUMN)?;
        if !(0.0..=1.0).contains(&label) {
            return Err(Error::BadRow {
                row,
                message: format!("label {label} outside [0,1]"),
            });
        }
        rows.push((TextFeatureVector::from_array(values), label));
    }
    Ok(FeatureTable { rows })
}

pub fn load_feature_table(path: &Path) -> Result<FeatureTable> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_feature_table(file, &path.display().to_string())
}

/// Shuffles rows with `seed` and splits them into a training part of
/// `round(train_fraction * n)` rows (at least one, leaving at least one
/// held-out row) and the remainder.
pub fn split_table(
    table: &FeatureTable,
    train_fraction: f64,
    seed: u64,
) -> Result<(FeatureTable, FeatureTable)> {
    use rand::seq::SliceRandom;
    let n = table.len();
    if n < 2 {
        return Err(Error::invalid(
            "need at least two rows to split a feature table",
        ));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::invalid("train_fraction must lie in (0, 1)"));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut crate::seed::rng_from_seed(seed));
    let k = ((train_fraction * n as f64).round() as usize).clamp(1, n - 1);
    let pick = |idx: &[usize]| FeatureTable {
        rows: idx.iter().map(|&i| table.rows[i]).collect(),
    };
    Ok((pick(&order[..k]), pick(&order[k..])))
}

/// Writes the table in canonical column order. Floats use shortest
/// round-trip formatting, so reading the output back is lossless.
pub fn write_feature_table<W: Write>(table: &FeatureTable, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header: Vec<&str> = FEATURE_NAMES.to_vec();
    header.push(LABEL_COLUMN);
    wtr.write_record(&header)
        .map_err(|e| Error::csv("feature table", e))?;
    for (features, label) in &table.rows {
        let mut rec: Vec<String> = features.to_array().iter().map(|v| v.to_string()).collect();
        rec.push(label.to_string());
        wtr.write_record(&rec)
            .map_err(|e| Error::csv("feature table", e))?;
    }
    wtr.flush().map_err(|e| Error::io("feature table", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_rating_examples() {
        assert_eq!(normalize_rating(5.0, 5.0).unwrap(), 1.0);
        assert_eq!(normalize_rating(0.0, 10.0).unwrap(), 0.0);
        assert!((normalize_rating(8.5, 10.0).unwrap() - 0.85).abs() < 1e-15);
        assert!(normalize_rating(11.0, 10.0).is_err());
        assert!(normalize_rating(-1.0, 10.0).is_err());
        assert!(normalize_rating(1.0, 0.0).is_err());
    }

    #[test]
    fn resample_preserves_duration() {
        let x: Vec<f64> = (0..44_100).map(|i| (i as f64 * 0.01).sin()).collect();
        let y = resample_linear(&x, 44_100, 22_050);
        assert_eq!(y.len(), 22_050);
        assert_eq!(y[10], x[20]);
    }

    #[test]
    fn detections_sorted_and_validated() {
        let rec = |t: f64, c: f64| DetectionRecord {
            t,
            label: "person".into(),
            confidence: c,
        };
        let tl = DetectionTimeline::new(vec![rec(3.0, 0.9), rec(1.0, 0.8)], Some(10.0)).unwrap();
        assert_eq!(tl.events()[0].t, 1.0);
        assert!(DetectionTimeline::new(vec![rec(11.0, 0.9)], Some(10.0)).is_err());
        assert!(DetectionTimeline::new(vec![rec(1.0, 1.5)], None).is_err());
        assert!(DetectionTimeline::new(vec![rec(-1.0, 0.5)], None).is_err());
    }

    fn csv_header() -> String {
        let mut h: Vec<&str> = FEATURE_NAMES.to_vec();
        h.push(LABEL_COLUMN);
        h.join(",")
    }

    fn csv_row(label: &str) -> String {
        let mut r: Vec<String> = (0..N_TEXT_FEATURES)
            .map(|i| format!("{}", i as f64 * 0.5))
            .collect();
        r.push(label.to_string());
        r.join(",")
    }

    #[test]
    fn feature_table_two_rows() {
        let text = format!(
            "{}\n{}\n{}\n",
            csv_header(),
            csv_row("0.5"),
            csv_row("0.25")
        );
        let t = read_feature_table(text.as_bytes(), "test").unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.rows[1].1, 0.25);
        assert_eq!(t.rows[0].0.duration, 6.0);
    }

    #[test]
    fn feature_table_reorders_columns() {
        let mut names: Vec<&str> = FEATURE_NAMES.to_vec();
        names.push(LABEL_COLUMN);
        names.reverse();
        let mut values: Vec<String> = (0..N_TEXT_FEATURES).map(|i| i.to_string()).collect();
        values.push("0.5".into());
        values.reverse();
        let text = format!("{}\n{}\n", names.join(","), values.join(","));
        let t = read_feature_table(text.as_bytes(), "test").unwrap();
        let arr = t.rows[0].0.to_array();
        for (i, v) in arr.iter().enumerate() {
            assert_eq!(*v, i as f64);
        }
    }

    #[test]
    fn feature_table_missing_column_named() {
        let header = csv_header().replace("easiness,", "");
        let text = format!("{header}\n");
        match read_feature_table(text.as_bytes(), "test") {
            Err(Error::MissingColumn(c)) => assert_eq!(c, "easiness"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn feature_table_label_out_of_range_names_row() {
        let text = format!("{}\n{}\n{}\n", csv_header(), csv_row("0.5"), csv_row("1.2"));
        match read_feature_table(text.as_bytes(), "test") {
            Err(Error::BadRow { row, .. }) => assert_eq!(row, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn feature_table_non_numeric_cell() {
        let text = format!("{}\n{}\n", csv_header(), csv_row("abc"));
        assert!(matches!(
            read_feature_table(text.as_bytes(), "test"),
            Err(Error::BadRow { row: 0, .. })
        ));
    }

    #[test]
    fn split_is_seeded_and_partitions_rows() {
        let rows = (0..30)
            .map(|i| {
                (
                    TextFeatureVector::from_array([i as f64; N_TEXT_FEATURES]),
                    i as f64 / 30.0,
                )
            })
            .collect();
        let table = FeatureTable::new(rows).unwrap();
        let (a, b) = split_table(&table, 0.67, 3).unwrap();
        assert_eq!((a.len(), b.len()), (20, 10));
        let (a2, _) = split_table(&table, 0.67, 3).unwrap();
        assert_eq!(a, a2);
        let mut labels: Vec<f64> = a.labels().into_iter().chain(b.labels()).collect();
        labels.sort_by(f64::total_cmp);
        assert_eq!(labels, table.labels());
        let one = FeatureTable::new(vec![table.rows[0]]).unwrap();
        assert!(split_table(&one, 0.67, 0).is_err());
    }
}

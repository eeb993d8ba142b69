//! Lecture bundles on disk and the feature-table CSV format.

use std::path::Path;

use clue_core::corpus::{load_lecture_bundle, read_feature_table, write_feature_table};
use clue_core::textfeat::{extract_text_features, N_TEXT_FEATURES};
use clue_core::{ErrorKind, FeatureTable, LexiconSet, TextFeatureVector};
use proptest::prelude::*;

fn write_wav(path: &Path, rate: u32, channels: u16, seconds: f64) {
    let spec = hound::WavSpec {
        channels,
        sample_rate: rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(path, spec).unwrap();
    for i in 0..(seconds * rate as f64) as usize {
        let v = (2.0 * std::f64::consts::PI * 330.0 * i as f64 / rate as f64).sin();
        for c in 0..channels {
            // the second channel is silent, so the mono mix halves the amplitude
            let s = if c == 0 { 0.4 * v } else { 0.0 };
            w.write_sample((s * i16::MAX as f64) as i16).unwrap();
        }
    }
    w.finalize().unwrap();
}

fn lecture_dir(manifest: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("talk.txt"),
        "Waves carry energy. They also carry information.",
    )
    .unwrap();
    write_wav(&dir.path().join("talk.wav"), 16_000, 2, 3.0);
    std::fs::write(
        dir.path().join("objects.jsonl"),
        "{\"t\": 2.5, \"label\": \"person\", \"confidence\": 0.9}\n\n{\"t\": 0.5, \"label\": \"screen\", \"confidence\": 0.7}\n",
    )
    .unwrap();
    std::fs::write(dir.path().join("manifest.json"), manifest).unwrap();
    dir
}

const MANIFEST: &str = r#"{
  "id": "waves",
  "title": "Waves",
  "transcript_path": "talk.txt",
  "audio_path": "talk.wav",
  "detections_path": "objects.jsonl",
  "duration_seconds": 3.0,
  "rating": 7.0,
  "rating_scale_max": 10.0
}"#;

#[test]
fn bundle_resolves_relative_paths_and_resamples() {
    let dir = lecture_dir(MANIFEST);
    let b = load_lecture_bundle(&dir.path().join("manifest.json"), 22_050).unwrap();
    assert_eq!(b.id, "waves");
    assert_eq!(b.sample_rate, 22_050);
    assert_eq!(b.audio.len(), 66_150);
    let peak = b.audio.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!((peak - 0.2).abs() < 1e-3, "mono mix peak {peak}");
    assert_eq!(b.rating, Some(0.7));
    let times: Vec<f64> = b.detections.events().iter().map(|e| e.t).collect();
    assert_eq!(times, [0.5, 2.5]);
    assert!(b.transcript.starts_with("Waves carry"));
}

#[test]
fn duration_mismatch_is_rejected() {
    let dir =
        lecture_dir(&MANIFEST.replace("\"duration_seconds\": 3.0", "\"duration_seconds\": 4.0"));
    let err = load_lecture_bundle(&dir.path().join("manifest.json"), 22_050).unwrap_err();
    assert_eq!(err.kind(), ErrorKind::Schema);
    assert!(err.to_string().contains("audio lasts"));
    // within the tolerance
    let dir =
        lecture_dir(&MANIFEST.replace("\"duration_seconds\": 3.0", "\"duration_seconds\": 3.2"));
    assert!(load_lecture_bundle(&dir.path().join("manifest.json"), 22_050).is_ok());
}

#[test]
fn manifest_problems_are_schema_errors() {
    for bad in [
        MANIFEST.replace("\"rating_scale_max\": 10.0", "\"rating_scale_max\": 5.0"),
        MANIFEST.replace(
            "\"title\": \"Waves\",",
            "\"title\": \"Waves\", \"speaker\": \"x\",",
        ),
        MANIFEST.replace("\"id\": \"waves\",", ""),
    ] {
        let dir = lecture_dir(&bad);
        let err = load_lecture_bundle(&dir.path().join("manifest.json"), 22_050).unwrap_err();
        assert_eq!(err.kind(), ErrorKind::Schema, "{err}");
    }
    let dir = lecture_dir(&MANIFEST.replace("talk.wav", "missing.wav"));
    let err = load_lecture_bundle(&dir.path().join("manifest.json"), 22_050).unwrap_err();
    assert_eq!(err.kind(), ErrorKind::Io);
}

#[test]
fn detections_past_the_end_are_rejected() {
    let dir = lecture_dir(MANIFEST);
    std::fs::write(
        dir.path().join("objects.jsonl"),
        "{\"t\": 9.0, \"label\": \"person\", \"confidence\": 0.9}\n",
    )
    .unwrap();
    assert!(load_lecture_bundle(&dir.path().join("manifest.json"), 22_050).is_err());
}

#[test]
fn bundle_features_match_direct_extraction() {
    let dir = lecture_dir(MANIFEST);
    let b = load_lecture_bundle(&dir.path().join("manifest.json"), 22_050).unwrap();
    let lex = LexiconSet::builtin();
    let f = clue_core::pipeline::lecture_text_features(&b, &lex).unwrap();
    assert_eq!(
        f,
        extract_text_features(&b.transcript, "Waves", 3.0, &lex).unwrap()
    );
    assert_eq!(f.word_count, 7.0);
    assert_eq!(f.title_word_count, 1.0);
}

fn feature_row() -> impl Strategy<Value = (TextFeatureVector, f64)> {
    (prop::array::uniform14(-1e6f64..1e6), 0.0f64..=1.0)
        .prop_map(|(v, y)| (TextFeatureVector::from_array(v), y))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn feature_table_csv_round_trip_is_lossless(rows in prop::collection::vec(feature_row(), 1..20)) {
        let table = FeatureTable::new(rows).unwrap();
        let mut buf = Vec::new();
        write_feature_table(&table, &mut buf).unwrap();
        let back = read_feature_table(buf.as_slice(), "memory").unwrap();
        prop_assert_eq!(back.rows.len(), table.rows.len());
        for ((a, ya), (b, yb)) in table.rows.iter().zip(&back.rows) {
            prop_assert_eq!(a.to_array().map(f64::to_bits), b.to_array().map(f64::to_bits));
            prop_assert_eq!(ya.to_bits(), yb.to_bits());
        }
    }

    #[test]
    fn text_rates_are_fractions(words in prop::collection::vec("[a-z]{1,8}|the|is|was|ought|need|nation|and|we", 0..80)) {
        let transcript = words.join(" ");
        let f = extract_text_features(&transcript, "a title", 90.0, &LexiconSet::builtin()).unwrap();
        let v = f.to_array();
        for (i, x) in v.iter().take(8).enumerate() {
            prop_assert!((0.0..=1.0).contains(x), "feature {} = {}", i, x);
        }
        prop_assert_eq!(f.word_count, words.len() as f64);
        prop_assert!((f.speaker_speed - words.len() as f64 / 1.5).abs() < 1e-9);
        prop_assert!(f.document_entropy >= 0.0 && f.document_entropy <= (words.len().max(1) as f64).log2() + 1e-9);
        prop_assert_eq!(v.len(), N_TEXT_FEATURES);
    }
}

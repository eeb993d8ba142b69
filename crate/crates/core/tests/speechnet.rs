use clue_core::dsp::DspConfig;
use clue_core::speechnet::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn separable(per_class: usize, noise: f64, seed: u64) -> SpeechDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Normal::new(0.0, 1.0).unwrap();
    let means: Vec<Vec<f64>> = (0..N_SPEECH_CLASSES)
        .map(|_| (0..INPUT_LEN).map(|_| unit.sample(&mut rng)).collect())
        .collect();
    let mut data = SpeechDataset::default();
    for _ in 0..per_class {
        for (c, m) in means.iter().enumerate() {
            data.features.push(
                m.iter()
                    .map(|v| v + noise * unit.sample(&mut rng))
                    .collect(),
            );
            data.labels.push(c);
        }
    }
    data
}

#[test]
fn separable_classes_are_learned() {
    let data = separable(8, 0.1, 1);
    assert_eq!(data.len(), 64);
    let cfg = TrainConfig {
        epochs: 200,
        target_train_accuracy: Some(0.95),
        ..TrainConfig::default()
    };
    let (model, history) = train_cnn(&data, None, &cfg, 5).unwrap();
    let last = history.last().unwrap();
    assert!(last.train_acc >= 0.95, "{history:?}");
    assert!(history.epochs.len() <= 200);
    assert_eq!(accuracy(&model, &data).unwrap(), last.train_acc);
    assert_eq!(model.mode, Mode::Eval);
}

#[test]
fn training_is_reproducible_and_val_equals_train_on_same_data() {
    let data = separable(4, 0.1, 2);
    let cfg = TrainConfig {
        epochs: 2,
        ..TrainConfig::default()
    };
    let (m1, h1) = train_cnn(&data, Some(&data), &cfg, 9).unwrap();
    let (m2, h2) = train_cnn(&data, Some(&data), &cfg, 9).unwrap();
    assert_eq!(h1, h2);
    assert_eq!(m1, m2);
    for e in &h1.epochs {
        assert_eq!(e.train_acc, e.val_acc);
    }
    let mut csv = Vec::new();
    h1.write_csv(&mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert!(text.starts_with("epoch,train_acc,val_acc,loss\n"));
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn dataset_smaller_than_a_batch_is_rejected() {
    let data = separable(1, 0.1, 3);
    assert!(train_cnn(&data, None, &TrainConfig::default(), 0).is_err());
}

fn write_tone(path: &std::path::Path, freq: f64, seconds: f64, rate: u32) {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(path, spec).unwrap();
    let n = (seconds * rate as f64) as usize;
    for i in 0..n {
        let v = 0.3 * (2.0 * std::f64::consts::PI * freq * i as f64 / rate as f64).sin();
        w.write_sample((v * i16::MAX as f64) as i16).unwrap();
    }
    w.finalize().unwrap();
}

#[test]
fn dataset_index_is_loaded_relative_to_its_directory() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::create_dir(dir.path().join("clips")).unwrap();
    write_tone(&dir.path().join("clips/a.wav"), 220.0, 0.5, 22_050);
    write_tone(&dir.path().join("clips/b.wav"), 440.0, 0.5, 22_050);
    let index = dir.path().join("index.csv");
    std::fs::write(&index, "label,path\nhappy,clips/a.wav\nFear,clips/b.wav\n").unwrap();
    let data = load_speech_dataset(&index, &DspConfig::default()).unwrap();
    assert_eq!(data.labels, vec![4, 3]);
    assert!(data.features.iter().all(|f| f.len() == INPUT_LEN));
    assert_ne!(data.features[0], data.features[1]);

    std::fs::write(&index, "path,label\nclips/a.wav,bored\n").unwrap();
    assert!(load_speech_dataset(&index, &DspConfig::default()).is_err());
}

#[test]
fn timeline_covers_recording() {
    let cfg = DspConfig::default();
    let rate = cfg.sample_rate;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let audio: Vec<f64> = (0..(35 * rate) as usize)
        .map(|_| rng.random_range(-0.1..0.1))
        .collect();
    let model = init_cnn(6);
    let tl = predict_emotion_timeline(&model, &audio, rate, &cfg).unwrap();
    let starts: Vec<f64> = tl.windows.iter().map(|w| w.start).collect();
    assert_eq!(starts, vec![0.0, 10.0, 20.0, 30.0]);
    for w in &tl.windows {
        assert!((w.distribution.probs().iter().sum::<f64>() - 1.0).abs() < 1e-6);
    }
    assert!(predict_emotion_timeline(&model, &audio[..(4 * rate) as usize], rate, &cfg).is_err());
}

#[test]
fn model_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("speech.cnn");
    let model = init_cnn(8);
    model.save(&path).unwrap();
    assert_eq!(CnnModel::load(&path).unwrap(), model);
}

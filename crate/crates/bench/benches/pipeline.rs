use std::hint::black_box;

use clue_core::dsp::{speech_feature_vector, Fft};
use clue_core::explain::{shapley_exact, shapley_sampled};
use clue_core::forest::train_forest_rows;
use clue_core::fusion::{train_coefficients, FusionConfig, FusionSample};
use clue_core::seed::rng_from_seed;
use clue_core::speechnet::{init_cnn, Mode, INPUT_LEN};
use clue_core::{BranchScores, DspConfig, ForestConfig};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use rand::Rng;

fn random_rows(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = rng_from_seed(seed);
    (0..n)
        .map(|_| (0..d).map(|_| rng.random::<f64>()).collect())
        .collect()
}

fn dsp(c: &mut Criterion) {
    let config = DspConfig::default();
    let sr = config.sample_rate as f64;
    let audio: Vec<f64> = (0..(10.0 * sr) as usize)
        .map(|i| (2.0 * std::f64::consts::PI * 220.0 * i as f64 / sr).sin() * 0.3)
        .collect();
    let mut group = c.benchmark_group("dsp");
    group.throughput(Throughput::Elements(audio.len() as u64));
    group.bench_function("feature_vector_10s", |b| {
        b.iter(|| speech_feature_vector(black_box(&audio), &config).unwrap())
    });
    group.finish();

    let fft = Fft::new(2048);
    let frame: Vec<f64> = audio[..2048].to_vec();
    c.bench_function("fft_2048", |b| {
        b.iter(|| fft.power_spectrum(black_box(&frame)))
    });
}

fn forest(c: &mut Criterion) {
    let x = random_rows(200, 14, 1);
    let y: Vec<f64> = x
        .iter()
        .map(|r| 0.3 * r[0] + 0.5 * r[3] + 0.2 * r[8])
        .collect();
    let names = (0..14).map(|i| format!("f{i}")).collect();
    let model = train_forest_rows(&x, &y, names, &ForestConfig::default(), 2).unwrap();

    c.bench_function("forest_predict", |b| {
        b.iter(|| model.predict_slice(black_box(&x[17])))
    });

    let background = random_rows(20, 14, 3);
    let f = |v: &[f64]| model.predict_slice(v);
    let mut group = c.benchmark_group("shapley");
    group.sample_size(10);
    group.bench_function("exact_14_features_bg20", |b| {
        b.iter(|| shapley_exact(&f, black_box(&x[0]), &background).unwrap())
    });
    for k in [200, 1000] {
        group.bench_with_input(BenchmarkId::new("sampled_14_features", k), &k, |b, &k| {
            b.iter(|| shapley_sampled(&f, black_box(&x[0]), &background, k, 5).unwrap())
        });
    }
    group.finish();
}

fn cnn(c: &mut Criterion) {
    let model = init_cnn(7);
    let mut group = c.benchmark_group("cnn");
    group.sample_size(10);
    for batch in [1usize, 16] {
        let inputs = random_rows(batch, INPUT_LEN, 9);
        group.throughput(Throughput::Elements(batch as u64));
        group.bench_with_input(BenchmarkId::new("forward", batch), &inputs, |b, inputs| {
            b.iter(|| model.forward(black_box(inputs), Mode::Eval).unwrap())
        });
    }
    let inputs = random_rows(16, INPUT_LEN, 10);
    let labels: Vec<usize> = (0..16).map(|i| i % 8).collect();
    group.bench_function("loss_and_gradients_16", |b| {
        b.iter(|| {
            model
                .loss_and_gradients(black_box(&inputs), &labels)
                .unwrap()
        })
    });
    group.finish();
}

fn fusion(c: &mut Criterion) {
    let truth = [0.4, 0.3, 0.2, 0.1];
    let samples: Vec<FusionSample> = random_rows(500, 4, 11)
        .into_iter()
        .map(|x| {
            let y_hat = x.iter().zip(truth).map(|(a, b)| a * b).sum();
            FusionSample {
                branches: BranchScores::from_array([x[0], x[1], x[2], x[3]]),
                y_hat,
            }
        })
        .collect();
    let config = FusionConfig::default();
    c.bench_function("fusion_train_500", |b| {
        b.iter(|| train_coefficients(black_box(&samples), &config).unwrap())
    });
}

criterion_group!(benches, dsp, forest, cnn, fusion);
criterion_main!(benches);

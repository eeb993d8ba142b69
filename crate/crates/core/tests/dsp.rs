//! Spectral front end against direct-summation oracles.

use std::f64::consts::PI;

use clue_core::dsp::{
    chroma, dct_ii, dct_matrix, hz_to_mel, mel_filterbank, mel_spectrogram, mel_to_hz,
    speech_feature_vector, Fft, CHROMA_NAMES, SPEECH_FEATURE_LEN,
};
use clue_core::DspConfig;
use proptest::prelude::*;

fn direct_dft(x: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = x.len();
    (0..n)
        .map(|k| {
            x.iter().enumerate().fold((0.0, 0.0), |(re, im), (t, v)| {
                let a = -2.0 * PI * (k * t % n) as f64 / n as f64;
                (re + v * a.cos(), im + v * a.sin())
            })
        })
        .unzip()
}

fn noise(n: usize, seed: u64) -> Vec<f64> {
    // small LCG; the values only need to be irregular
    let mut s = seed
        .wrapping_mul(6364136223846793005)
        .wrapping_add(1442695040888963407);
    (0..n)
        .map(|_| {
            s = s
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        })
        .collect()
}

fn sine(freq: f64, seconds: f64, sr: u32) -> Vec<f64> {
    (0..(seconds * sr as f64) as usize)
        .map(|i| 0.5 * (2.0 * PI * freq * i as f64 / sr as f64).sin())
        .collect()
}

fn fft_rel_error(x: &[f64]) -> f64 {
    let (dr, di) = direct_dft(x);
    let mut re = x.to_vec();
    let mut im = vec![0.0; x.len()];
    Fft::new(x.len()).forward(&mut re, &mut im);
    let err: f64 = (0..x.len())
        .map(|k| (re[k] - dr[k]).powi(2) + (im[k] - di[k]).powi(2))
        .sum();
    let norm: f64 = (0..x.len()).map(|k| dr[k].powi(2) + di[k].powi(2)).sum();
    (err / norm).sqrt()
}

#[test]
fn fft_matches_direct_dft() {
    for (i, n) in [1usize, 2, 4, 8, 64, 512, 2048].into_iter().enumerate() {
        let x = noise(n, i as u64 + 1);
        let err = fft_rel_error(&x);
        assert!(err < 1e-9, "n = {n}: relative error {err}");
    }
}

#[test]
fn parseval_holds() {
    let x = noise(1024, 9);
    let mut re = x.clone();
    let mut im = vec![0.0; x.len()];
    Fft::new(1024).forward(&mut re, &mut im);
    let time: f64 = x.iter().map(|v| v * v).sum();
    let freq: f64 = re.iter().zip(&im).map(|(a, b)| a * a + b * b).sum::<f64>() / 1024.0;
    assert!((time - freq).abs() / time < 1e-12);
}

#[test]
fn one_sided_power_spectrum_of_real_signal() {
    let x = noise(256, 4);
    let p = Fft::new(256).power_spectrum(&x);
    assert_eq!(p.len(), 129);
    let (dr, di) = direct_dft(&x);
    for k in 0..=128 {
        let expected = dr[k] * dr[k] + di[k] * di[k];
        assert!((p[k] - expected).abs() <= 1e-9 * expected.max(1.0));
    }
}

#[test]
fn a440_is_pitch_class_a() {
    let cfg = DspConfig::default();
    let c = chroma(&sine(440.0, 1.0, cfg.sample_rate), &cfg).unwrap();
    let best = (0..12).max_by(|&a, &b| c[a].total_cmp(&c[b])).unwrap();
    assert_eq!(CHROMA_NAMES[best], "A");
    assert_eq!(c[best], 1.0);
}

/// Band whose triangle responds most strongly at `f`, from the filter
/// definition rather than the sampled filterbank.
fn expected_band(f: f64, cfg: &DspConfig) -> usize {
    let (lo, hi) = (hz_to_mel(cfg.fmin), hz_to_mel(cfg.fmax()));
    let edge = |i: usize| mel_to_hz(lo + (hi - lo) * i as f64 / (cfg.n_mels + 1) as f64);
    (0..cfg.n_mels)
        .max_by(|&a, &b| {
            let w = |m: usize| {
                ((f - edge(m)) / (edge(m + 1) - edge(m)))
                    .min((edge(m + 2) - f) / (edge(m + 2) - edge(m + 1)))
            };
            w(a).total_cmp(&w(b))
        })
        .unwrap()
}

#[test]
fn one_kilohertz_peaks_in_its_mel_band() {
    let cfg = DspConfig::default();
    let mel = mel_spectrogram(&sine(1000.0, 1.0, cfg.sample_rate), &cfg).unwrap();
    let best = (0..mel.len())
        .max_by(|&a, &b| mel[a].total_cmp(&mel[b]))
        .unwrap();
    assert_eq!(best, expected_band(1000.0, &cfg));
}

#[test]
fn feature_vector_has_180_values() {
    let cfg = DspConfig::default();
    let v = speech_feature_vector(&sine(300.0, 0.5, cfg.sample_rate), &cfg).unwrap();
    assert_eq!(v.as_slice().len(), SPEECH_FEATURE_LEN);
    assert_eq!(SPEECH_FEATURE_LEN, 180);
    assert_eq!(v.mfcc().len() + v.mel().len() + v.chroma().len(), 180);
}

#[test]
fn dct_is_orthonormal() {
    let m = dct_matrix(16, 16);
    for i in 0..16 {
        for j in 0..16 {
            let d: f64 = (0..16).map(|k| m[i][k] * m[j][k]).sum();
            let expected = if i == j { 1.0 } else { 0.0 };
            assert!((d - expected).abs() < 1e-12);
        }
    }
}

#[test]
fn filterbank_triangles_cross_at_half_height() {
    let cfg = DspConfig::default();
    let bank = mel_filterbank(&cfg);
    assert_eq!(bank.len(), cfg.n_mels);
    for k in 0..bank[0].len() {
        let total: f64 = bank.iter().map(|row| row[k]).sum();
        assert!(total <= 1.0 + 1e-12, "bin {k} weight {total}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fft_is_linear(seed in 0u64..1000, a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let x = noise(128, seed);
        let y = noise(128, seed + 7);
        let fft = Fft::new(128);
        let run = |v: &[f64]| {
            let mut re = v.to_vec();
            let mut im = vec![0.0; v.len()];
            fft.forward(&mut re, &mut im);
            (re, im)
        };
        let mix: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
        let (mr, mi) = run(&mix);
        let (xr, xi) = run(&x);
        let (yr, yi) = run(&y);
        for k in 0..128 {
            prop_assert!((mr[k] - (a * xr[k] + b * yr[k])).abs() < 1e-9);
            prop_assert!((mi[k] - (a * xi[k] + b * yi[k])).abs() < 1e-9);
        }
    }

    #[test]
    fn dct_preserves_energy(v in prop::collection::vec(-50.0f64..50.0, 8..64)) {
        let c = dct_ii(&v, v.len());
        let e_in: f64 = v.iter().map(|x| x * x).sum();
        let e_out: f64 = c.iter().map(|x| x * x).sum();
        prop_assert!((e_in - e_out).abs() <= 1e-9 * e_in.max(1.0));
    }

    #[test]
    fn chroma_is_max_normalized(freq in 60.0f64..4000.0) {
        let cfg = DspConfig::default();
        let c = chroma(&sine(freq, 0.25, cfg.sample_rate), &cfg).unwrap();
        let max = c.iter().copied().fold(0.0, f64::max);
        prop_assert_eq!(max, 1.0);
        prop_assert!(c.iter().all(|v| (0.0..=1.0).contains(v)));
    }
}

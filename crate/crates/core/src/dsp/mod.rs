//! Speech feature extraction: 40 MFCCs, a 128-band log-mel spectrum and a
//! 12-class chroma profile, each averaged over STFT frames and concatenated
//! into one 180-dimensional vector.

mod fft;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use fft::{hann, Fft};

pub const N_MFCC: usize = 40;
pub const N_MELS: usize = 128;
pub const N_CHROMA: usize = 12;
pub const SPEECH_FEATURE_LEN: usize = N_MFCC + N_MELS + N_CHROMA;

pub const CHROMA_NAMES: [&str; N_CHROMA] = [
    "C", "C#", "D", "D#", "E", "F", "F#", "G", "G#", "A", "A#", "B",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    Hann,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DspConfig {
    pub sample_rate: u32,
    pub frame_length: usize,
    pub hop: usize,
    pub window: Window,
    pub n_mels: usize,
    pub n_mfcc: usize,
    pub fmin: f64,
    /// `None` means Nyquist.
    pub fmax: Option<f64>,
    pub log_floor: f64,
}

impl Default for DspConfig {
    fn default() -> Self {
        Self {
            sample_rate: 22_050,
            frame_length: 2048,
            hop: 512,
            window: Window::Hann,
            n_mels: N_MELS,
            n_mfcc: N_MFCC,
            fmin: 0.0,
            fmax: None,
            log_floor: 1e-10,
        }
    }
}

impl DspConfig {
    pub fn fmax(&self) -> f64 {
        self.fmax.unwrap_or(self.sample_rate as f64 / 2.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sample_rate == 0 {
            return Err(Error::invalid("sample_rate must be positive"));
        }
        if !self.frame_length.is_power_of_two() || self.frame_length < 2 {
            return Err(Error::invalid(format!(
                "frame_length {} must be a power of two",
                self.frame_length
            )));
        }
        if self.hop == 0 {
            return Err(Error::invalid("hop must be positive"));
        }
        if self.n_mels == 0 || self.n_mfcc == 0 || self.n_mfcc > self.n_mels {
            return Err(Error::invalid(format!(
                "need 0 < n_mfcc ({}) <= n_mels ({})",
                self.n_mfcc, self.n_mels
            )));
        }
        let nyquist = self.sample_rate as f64 / 2.0;
        if !(self.fmin >= 0.0 && self.fmin < self.fmax() && self.fmax() <= nyquist) {
            return Err(Error::invalid(format!(
                "need 0 <= fmin ({}) < fmax ({}) <= {nyquist}",
                self.fmin,
                self.fmax()
            )));
        }
        if !(self.log_floor > 0.0) {
            return Err(Error::invalid("log_floor must be positive"));
        }
        Ok(())
    }
}

/// HTK mel scale.
pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Frequency in Hz of one-sided FFT bin `k`.
pub fn bin_frequency(k: usize, config: &DspConfig) -> f64 {
    k as f64 * config.sample_rate as f64 / config.frame_length as f64
}

/// Triangular filters with unit peak, `n_mels` rows by `frame_length/2 + 1`
/// columns. Neighbouring triangles cross at half height, so the weights on any
/// bin sum to at most one.
pub fn mel_filterbank(config: &DspConfig) -> Vec<Vec<f64>> {
    let n_bins = config.frame_length / 2 + 1;
    let (lo, hi) = (hz_to_mel(config.fmin), hz_to_mel(config.fmax()));
    let edges: Vec<f64> = (0..config.n_mels + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (config.n_mels + 1) as f64))
        .collect();
    (0..config.n_mels)
        .map(|m| {
            let (left, center, right) = (edges[m], edges[m + 1], edges[m + 2]);
            (0..n_bins)
                .map(|k| {
                    let f = bin_frequency(k, config);
                    let rising = (f - left) / (center - left);
                    let falling = (right - f) / (right - center);
                    rising.min(falling).max(0.0)
                })
                .collect()
        })
        .collect()
}

/// Pitch class (0 = C, 9 = A) of a frequency, by nearest equal-tempered semitone.
pub fn pitch_class(f: f64) -> usize {
    let semitones = (12.0 * (f / 440.0).log2()).round() as i64;
    (semitones + 9).rem_euclid(12) as usize
}

/// Power spectra of Hann-windowed frames (no padding; trailing partial frame dropped).
pub fn power_frames(samples: &[f64], config: &DspConfig) -> Result<Vec<Vec<f64>>> {
    config.validate()?;
    let n = config.frame_length;
    if samples.len() < n {
        return Err(Error::invalid(format!(
            "audio has {} samples, at least {n} required",
            samples.len()
        )));
    }
    if samples.iter().any(|s| !s.is_finite()) {
        return Err(Error::Numeric("audio contains non-finite samples".into()));
    }
    let fft = Fft::new(n);
    let window = hann(n);
    let n_frames = 1 + (samples.len() - n) / config.hop;
    let mut frame = vec![0.0; n];
    Ok((0..n_frames)
        .map(|i| {
            let start = i * config.hop;
            for (j, f) in frame.iter_mut().enumerate() {
                *f = samples[start + j] * window[j];
            }
            fft.power_spectrum(&frame)
        })
        .collect())
}

fn mean_rows(rows: &[Vec<f64>]) -> Vec<f64> {
    let mut acc = vec![0.0; rows[0].len()];
    for r in rows {
        for (a, v) in acc.iter_mut().zip(r) {
            *a += v;
        }
    }
    let n = rows.len() as f64;
    acc.into_iter().map(|a| a / n).collect()
}

fn log_mel_from_power(frames: &[Vec<f64>], config: &DspConfig) -> Vec<f64> {
    let bank = mel_filterbank(config);
    let per_frame: Vec<Vec<f64>> = frames
        .iter()
        .map(|p| {
            bank.iter()
                .map(|row| {
                    let e: f64 = row.iter().zip(p).map(|(w, x)| w * x).sum();
                    10.0 * e.max(config.log_floor).log10()
                })
                .collect()
        })
        .collect();
    mean_rows(&per_frame)
}

/// Orthonormal DCT-II matrix, `n_out` rows by `n_in` columns.
pub fn dct_matrix(n_out: usize, n_in: usize) -> Vec<Vec<f64>> {
    (0..n_out)
        .map(|k| {
            let scale = if k == 0 {
                (1.0 / n_in as f64).sqrt()
            } else {
                (2.0 / n_in as f64).sqrt()
            };
            (0..n_in)
                .map(|n| scale * (PI * k as f64 * (2 * n + 1) as f64 / (2 * n_in) as f64).cos())
                .collect()
        })
        .collect()
}

/// First `n_out` orthonormal DCT-II coefficients of `v`.
pub fn dct_ii(v: &[f64], n_out: usize) -> Vec<f64> {
    dct_matrix(n_out, v.len())
        .iter()
        .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
        .collect()
}

fn chroma_from_power(frames: &[Vec<f64>], config: &DspConfig) -> Vec<f64> {
    let n_bins = config.frame_length / 2 + 1;
    let classes: Vec<usize> = (1..n_bins)
        .map(|k| pitch_class(bin_frequency(k, config)))
        .collect();
    let per_frame: Vec<Vec<f64>> = frames
        .iter()
        .map(|p| {
            let mut c = vec![0.0; N_CHROMA];
            for (k, class) in (1..n_bins).zip(&classes) {
                c[*class] += p[k];
            }
            c
        })
        .collect();
    let mean = mean_rows(&per_frame);
    let max = mean.iter().copied().fold(0.0, f64::max);
    if max > 0.0 {
        mean.into_iter().map(|v| v / max).collect()
    } else {
        vec![0.0; N_CHROMA]
    }
}

/// Frame-averaged log-mel spectrum in dB, one value per mel band.
pub fn mel_spectrogram(samples: &[f64], config: &DspConfig) -> Result<Vec<f64>> {
    let frames = power_frames(samples, config)?;
    Ok(log_mel_from_power(&frames, config))
}

/// Frame-averaged MFCCs. The DCT is linear, so the DCT of the mean log-mel
/// vector equals the mean of per-frame DCTs.
pub fn mfcc(samples: &[f64], config: &DspConfig) -> Result<Vec<f64>> {
    let log_mel = mel_spectrogram(samples, config)?;
    Ok(dct_ii(&log_mel, config.n_mfcc))
}

/// Frame-averaged chroma profile, max-normalized to [0, 1]. Silence gives zeros.
pub fn chroma(samples: &[f64], config: &DspConfig) -> Result<Vec<f64>> {
    let frames = power_frames(samples, config)?;
    Ok(chroma_from_power(&frames, config))
}

/// `mfcc ‖ mel ‖ chroma`, always 180 values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SpeechFeatureVector(Vec<f64>);

impl SpeechFeatureVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() != SPEECH_FEATURE_LEN {
            return Err(Error::invalid(format!(
                "speech feature vector needs {SPEECH_FEATURE_LEN} values, got {}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(
                "speech features contain non-finite values".into(),
            ));
        }
        Ok(Self(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn mfcc(&self) -> &[f64] {
        &self.0[..N_MFCC]
    }

    pub fn mel(&self) -> &[f64] {
        &self.0[N_MFCC..N_MFCC + N_MELS]
    }

    pub fn chroma(&self) -> &[f64] {
        &self.0[N_MFCC + N_MELS..]
    }
}

pub fn speech_feature_vector(samples: &[f64], config: &DspConfig) -> Result<SpeechFeatureVector> {
    if config.n_mfcc != N_MFCC || config.n_mels != N_MELS {
        return Err(Error::invalid(format!(
            "speech features need n_mfcc = {N_MFCC} and n_mels = {N_MELS}"
        )));
    }
    let frames = power_frames(samples, config)?;
    let log_mel = log_mel_from_power(&frames, config);
    let mut out = dct_ii(&log_mel, N_MFCC);
    out.extend_from_slice(&log_mel);
    out.extend(chroma_from_power(&frames, config));
    SpeechFeatureVector::new(out)
}

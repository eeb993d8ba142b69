//! Windowed inference over a whole recording.

use serde::{Deserialize, Serialize};

use super::model::{CnnModel, Mode};
use crate::dsp::{speech_feature_vector, DspConfig};
use crate::emotion::{EmotionDistribution, SPEECH_EMOTIONS};
use crate::error::{Error, Result};

pub const WINDOW_SECONDS: f64 = 10.0;
pub const HOP_SECONDS: f64 = 10.0;
/// A trailing window shorter than this is dropped; a longer one is zero-padded.
pub const MIN_TRAILING_SECONDS: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimelineWindow {
    pub start: f64,
    pub distribution: EmotionDistribution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmotionTimeline {
    pub classes: Vec<String>,
    pub windows: Vec<TimelineWindow>,
}

impl EmotionTimeline {
    pub fn new(windows: Vec<TimelineWindow>) -> Result<Self> {
        let timeline = Self {
            classes: SPEECH_EMOTIONS.iter().map(|s| s.to_string()).collect(),
            windows,
        };
        timeline.validate()?;
        Ok(timeline)
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes.len() != SPEECH_EMOTIONS.len()
            || self
                .classes
                .iter()
                .zip(SPEECH_EMOTIONS)
                .any(|(a, b)| a != b)
        {
            return Err(Error::invalid(
                "timeline class order does not match the speech classes",
            ));
        }
        for w in &self.windows {
            EmotionDistribution::new(w.distribution.probs().to_vec())?;
            if w.distribution.len() != SPEECH_EMOTIONS.len() {
                return Err(Error::invalid(
                    "timeline window has the wrong number of classes",
                ));
            }
        }
        if self.windows.windows(2).any(|p| p[0].start >= p[1].start) {
            return Err(Error::invalid("timeline windows are not sorted by start"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }
}

/// `(start_sample, available_samples)` of every analysis window; windows are
/// `window` samples long except a kept trailing one, which has fewer
/// available samples and gets padded by the caller.
pub fn window_bounds(n_samples: usize, sample_rate: u32) -> Result<Vec<(usize, usize)>> {
    let sr = sample_rate as f64;
    let window = (WINDOW_SECONDS * sr).round() as usize;
    let hop = (HOP_SECONDS * sr).round() as usize;
    let min_tail = (MIN_TRAILING_SECONDS * sr).round() as usize;
    if n_samples < min_tail {
        return Err(Error::invalid(format!(
            "audio lasts {:.2} s, at least {MIN_TRAILING_SECONDS} s required",
            n_samples as f64 / sr
        )));
    }
    let mut out = Vec::new();
    let mut start = 0;
    while start < n_samples {
        let available = (n_samples - start).min(window);
        if available == window || available >= min_tail {
            out.push((start, available));
        }
        start += hop;
    }
    Ok(out)
}

pub fn window_features(
    audio: &[f64],
    sample_rate: u32,
    dsp: &DspConfig,
) -> Result<Vec<(f64, Vec<f64>)>> {
    let window = (WINDOW_SECONDS * sample_rate as f64).round() as usize;
    window_bounds(audio.len(), sample_rate)?
        .into_iter()
        .map(|(start, available)| {
            let mut buf = audio[start..start + available].to_vec();
            buf.resize(window, 0.0);
            let v = speech_feature_vector(&buf, dsp)?;
            Ok((start as f64 / sample_rate as f64, v.as_slice().to_vec()))
        })
        .collect()
}

/// Runs the eval-mode network on every 10 s window of `audio`.
pub fn predict_emotion_timeline(
    model: &CnnModel,
    audio: &[f64],
    sample_rate: u32,
    dsp: &DspConfig,
) -> Result<EmotionTimeline> {
    if sample_rate != dsp.sample_rate {
        return Err(Error::invalid(format!(
            "audio sampled at {sample_rate} Hz but features expect {} Hz",
            dsp.sample_rate
        )));
    }
    let feats = window_features(audio, sample_rate, dsp)?;
    let inputs: Vec<&[f64]> = feats.iter().map(|(_, v)| v.as_slice()).collect();
    let probs = model.forward(&inputs, Mode::Eval)?;
    let windows = feats
        .iter()
        .zip(probs)
        .map(|((start, _), p)| {
            Ok(TimelineWindow {
                start: *start,
                distribution: EmotionDistribution::new(p)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    EmotionTimeline::new(windows)
}

//! Object-activity branch: detector events per minute, mapped onto [0, 1].

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::corpus::DetectionTimeline;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObjectConfig {
    pub min_confidence: f64,
    /// Events per minute at which the branch score reaches 1.
    pub saturation_rate: f64,
}

impl Default for ObjectConfig {
    fn default() -> Self {
        Self {
            min_confidence: 0.5,
            saturation_rate: 10.0,
        }
    }
}

impl ObjectConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.min_confidence) {
            return Err(Error::invalid("min_confidence must lie in [0, 1]"));
        }
        if !(self.saturation_rate > 0.0 && self.saturation_rate.is_finite()) {
            return Err(Error::invalid("saturation_rate must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectActivity {
    pub objects_per_minute: f64,
    pub distinct_labels: usize,
    pub x4: f64,
}

/// Counts events at or above `min_confidence`; `x4 = min(1, rate / saturation)`.
pub fn object_rate_feature(
    timeline: &DetectionTimeline,
    duration_seconds: f64,
    config: &ObjectConfig,
) -> Result<ObjectActivity> {
    config.validate()?;
    if !(duration_seconds > 0.0 && duration_seconds.is_finite()) {
        return Err(Error::invalid(format!(
            "duration must be positive, got {duration_seconds}"
        )));
    }
    let kept: Vec<_> = timeline
        .events()
        .iter()
        .filter(|e| e.confidence >= config.min_confidence)
        .collect();
    let rate = kept.len() as f64 / (duration_seconds / 60.0);
    Ok(ObjectActivity {
        objects_per_minute: rate,
        distinct_labels: kept
            .iter()
            .map(|e| e.label.as_str())
            .collect::<BTreeSet<_>>()
            .len(),
        x4: (rate / config.saturation_rate).min(1.0),
    })
}

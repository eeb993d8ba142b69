//! Threshold rules over a scored lecture and the resulting report.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::shapley::ShapleyAttribution;
use crate::emotion::EmotionDistribution;
use crate::error::{Error, Result};
use crate::fusion::{
    ablation_leave_one_out, fuse, temporal_variability, AblationScores, BranchScores,
    FusionCoefficients, REFERENCE_ABLATION,
};
use crate::objcount::ObjectActivity;
use crate::speechnet::EmotionTimeline;
use crate::textfeat::{TextFeatureVector, FEATURE_NAMES};

pub const REPORT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportThresholds {
    /// Words per minute.
    pub speed_min: f64,
    pub speed_max: f64,
    pub tobe_verb_rate_max: f64,
    pub auxiliary_rate_max: f64,
    pub easiness_min: f64,
    pub normalization_rate_min: f64,
    /// Seconds.
    pub duration_max: f64,
    pub speech_variability_min: f64,
}

impl Default for ReportThresholds {
    fn default() -> Self {
        Self {
            speed_min: 115.0,
            speed_max: 120.0,
            tobe_verb_rate_max: 0.03,
            auxiliary_rate_max: 0.025,
            easiness_min: 83.0,
            normalization_rate_min: 0.1,
            duration_max: 1800.0,
            speech_variability_min: 0.2,
        }
    }
}

pub mod rule_ids {
    pub const SPEAKER_SPEED: &str = "speaker_speed_115_120_wpm";
    pub const TOBE_VERB_RATE: &str = "tobe_verb_rate_below_0.03";
    pub const AUXILIARY_RATE: &str = "auxiliary_rate_below_0.025";
    pub const EASINESS: &str = "easiness_above_83";
    pub const NORMALIZATION_RATE: &str = "normalization_rate_above_0.1";
    pub const DURATION: &str = "duration_at_most_cutoff";
    pub const SPEECH_VARIABILITY: &str = "speech_variability_at_least_0.2";
    pub const VISUAL_OBJECTS: &str = "visual_objects_present";

    pub const ALL: [&str; 8] = [
        SPEAKER_SPEED,
        TOBE_VERB_RATE,
        AUXILIARY_RATE,
        EASINESS,
        NORMALIZATION_RATE,
        DURATION,
        SPEECH_VARIABILITY,
        VISUAL_OBJECTS,
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Finding {
    pub rule_id: String,
    pub feature: String,
    pub observed: f64,
    /// The rule in symbols, e.g. `115 <= speaker_speed <= 120`.
    pub rule: String,
    pub verdict: String,
    pub suggestion: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapleyEntry {
    pub feature: String,
    pub value: f64,
    pub feature_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackReport {
    pub format_version: u32,
    /// Lecture id; set by the pipeline, absent for bare feature vectors.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub score: f64,
    pub branches: BranchScores,
    pub coefficients: FusionCoefficients,
    pub ablation: AblationScores,
    pub reference_ablation: AblationScores,
    pub text_emotion: EmotionDistribution,
    pub speech_variability: f64,
    pub objects_per_minute: f64,
    pub shapley_base_value: Option<f64>,
    pub shapley: Vec<ShapleyEntry>,
    pub findings: Vec<Finding>,
    pub passed_rules: Vec<String>,
}

struct Check {
    id: &'static str,
    feature: &'static str,
    observed: f64,
    rule: String,
    /// `None` when the rule holds.
    verdict: Option<&'static str>,
    suggestion: &'static str,
}

fn checks(
    features: &TextFeatureVector,
    speech_variability: f64,
    activity: &ObjectActivity,
    t: &ReportThresholds,
) -> Vec<Check> {
    let speed = features.speaker_speed;
    vec![
        Check {
            id: rule_ids::SPEAKER_SPEED,
            feature: "speaker_speed",
            observed: speed,
            rule: format!(
                "{} <= speaker_speed <= {} words/min",
                t.speed_min, t.speed_max
            ),
            verdict: if speed < t.speed_min {
                Some("too_slow")
            } else if speed > t.speed_max {
                Some("too_fast")
            } else {
                None
            },
            suggestion: "Adjust the speaking pace toward the target words-per-minute band.",
        },
        Check {
            id: rule_ids::TOBE_VERB_RATE,
            feature: "tobe_verb_rate",
            observed: features.tobe_verb_rate,
            rule: format!("tobe_verb_rate < {}", t.tobe_verb_rate_max),
            verdict: (features.tobe_verb_rate >= t.tobe_verb_rate_max).then_some("too_high"),
            suggestion: "Prefer active verbs over forms of `to be`.",
        },
        Check {
            id: rule_ids::AUXILIARY_RATE,
            feature: "auxiliary_rate",
            observed: features.auxiliary_rate,
            rule: format!("auxiliary_rate < {}", t.auxiliary_rate_max),
            verdict: (features.auxiliary_rate >= t.auxiliary_rate_max).then_some("too_high"),
            suggestion: "Use fewer auxiliary verbs such as would, could and should.",
        },
        Check {
            id: rule_ids::EASINESS,
            feature: "easiness",
            observed: features.easiness,
            rule: format!("easiness > {}", t.easiness_min),
            verdict: (features.easiness <= t.easiness_min).then_some("too_low"),
            suggestion:
                "Shorten sentences and favor shorter words to make the transcript easier to follow.",
        },
        Check {
            id: rule_ids::NORMALIZATION_RATE,
            feature: "normalization_rate",
            observed: features.normalization_rate,
            rule: format!("normalization_rate > {}", t.normalization_rate_min),
            verdict: (features.normalization_rate <= t.normalization_rate_min).then_some("too_low"),
            suggestion:
                "Name concepts directly with nouns (e.g. -tion, -ment words) when introducing them.",
        },
        Check {
            id: rule_ids::DURATION,
            feature: "duration",
            observed: features.duration,
            rule: format!("duration <= {} s", t.duration_max),
            verdict: (features.duration > t.duration_max).then_some("long"),
            suggestion: "Consider splitting the lecture into shorter parts.",
        },
        Check {
            id: rule_ids::SPEECH_VARIABILITY,
            feature: "speech_variability",
            observed: speech_variability,
            rule: format!("speech_variability >= {}", t.speech_variability_min),
            verdict: (speech_variability < t.speech_variability_min).then_some("monotone"),
            suggestion: "Vary vocal tone and emotion across the lecture; delivery sounds monotone.",
        },
        Check {
            id: rule_ids::VISUAL_OBJECTS,
            feature: "x4",
            observed: activity.x4,
            rule: "x4 > 0".to_string(),
            verdict: (activity.x4 <= 0.0).then_some("absent"),
            suggestion: "No visual objects or animations were detected; add visual material.",
        },
    ]
}

/// Evaluates every rule and assembles the report. `shapley`, when present,
/// must be an attribution over the fourteen text features.
#[allow(clippy::too_many_arguments)]
pub fn feedback_report(
    features: &TextFeatureVector,
    text_dist: &EmotionDistribution,
    timeline: &EmotionTimeline,
    activity: &ObjectActivity,
    coeffs: &FusionCoefficients,
    branches: &BranchScores,
    shapley: Option<&ShapleyAttribution>,
    thresholds: &ReportThresholds,
) -> Result<FeedbackReport> {
    branches.validate()?;
    coeffs.validate()?;
    let probs: Vec<&[f64]> = timeline
        .windows
        .iter()
        .map(|w| w.distribution.probs())
        .collect();
    let speech_variability = temporal_variability(&probs);
    let mut findings = Vec::new();
    let mut passed_rules = Vec::new();
    for c in checks(features, speech_variability, activity, thresholds) {
        match c.verdict {
            Some(verdict) => findings.push(Finding {
                rule_id: c.id.to_string(),
                feature: c.feature.to_string(),
                observed: c.observed,
                rule: c.rule,
                verdict: verdict.to_string(),
                suggestion: c.suggestion.to_string(),
            }),
            None => passed_rules.push(c.id.to_string()),
        }
    }
    let shapley_entries = match shapley {
        Some(a) => {
            if a.values.len() != FEATURE_NAMES.len() {
                return Err(Error::invalid(
                    "Shapley attribution must cover the text features",
                ));
            }
            FEATURE_NAMES
                .iter()
                .zip(a.values.iter().zip(&a.feature_values))
                .map(|(name, (v, x))| ShapleyEntry {
                    feature: name.to_string(),
                    value: *v,
                    feature_value: *x,
                })
                .collect()
        }
        None => Vec::new(),
    };
    Ok(FeedbackReport {
        format_version: REPORT_FORMAT_VERSION,
        id: None,
        score: fuse(coeffs, branches),
        branches: *branches,
        coefficients: *coeffs,
        ablation: ablation_leave_one_out(coeffs, branches),
        reference_ablation: REFERENCE_ABLATION,
        text_emotion: text_dist.clone(),
        speech_variability,
        objects_per_minute: activity.objects_per_minute,
        shapley_base_value: shapley.map(|a| a.base_value),
        shapley: shapley_entries,
        findings,
        passed_rules,
    })
}

impl FeedbackReport {
    pub fn to_json(&self) -> Result<String> {
        let mut s =
            serde_json::to_string_pretty(self).map_err(|e| Error::json("feedback report", e))?;
        s.push('\n');
        Ok(s)
    }

    /// Plain-text rendering with fixed number formatting.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let b = &self.branches;
        let a = &self.ablation;
        let r = &self.reference_ablation;
        if let Some(id) = &self.id {
            let _ = writeln!(out, "Lecture: {id}");
        }
        let _ = writeln!(out, "Engagement score: {:.4}", self.score);
        let _ = writeln!(
            out,
            "Branches: x1 {:.4}  x2 {:.4}  x3 {:.4}  x4 {:.4}",
            b.x1, b.x2, b.x3, b.x4
        );
        let c = &self.coefficients;
        let _ = writeln!(
            out,
            "Coefficients: alpha {:.4}  beta {:.4}  gamma {:.4}  delta {:.4}",
            c.alpha, c.beta, c.gamma, c.delta
        );
        let _ = writeln!(out, "\nLeave-one-out (reference in brackets):");
        for (name, v, rv) in [
            ("full", a.full, r.full),
            ("without x1", a.drop_x1, r.drop_x1),
            ("without x2", a.drop_x2, r.drop_x2),
            ("without x3", a.drop_x3, r.drop_x3),
            ("without x4", a.drop_x4, r.drop_x4),
        ] {
            let _ = writeln!(out, "  {name:<11} {v:.4} [{rv:.2}]");
        }
        if !self.shapley.is_empty() {
            let _ = writeln!(
                out,
                "\nFeature attributions (base {:.4}):",
                self.shapley_base_value.unwrap_or(f64::NAN)
            );
            let mut entries: Vec<&ShapleyEntry> = self.shapley.iter().collect();
            entries.sort_by(|x, y| {
                y.value
                    .abs()
                    .total_cmp(&x.value.abs())
                    .then(x.feature.cmp(&y.feature))
            });
            for e in entries {
                let _ = writeln!(
                    out,
                    "  {:<28} {:+.5}  (value {:.4})",
                    e.feature, e.value, e.feature_value
                );
            }
        }
        let _ = writeln!(out);
        if self.findings.is_empty() {
            let _ = writeln!(out, "No rule violations.");
        } else {
            let _ = writeln!(out, "Findings:");
            for f in &self.findings {
                let _ = writeln!(
                    out,
                    "  [{}] {} = {:.4}: {} (rule: {})",
                    f.rule_id, f.feature, f.observed, f.verdict, f.rule
                );
                let _ = writeln!(out, "      {}", f.suggestion);
            }
        }
        let _ = writeln!(out, "Rules passed: {}", self.passed_rules.len());
        out
    }
}

//! End-to-end scoring of one lecture: features, the four branches, the fused
//! score, and the feedback report.

use serde::{Deserialize, Serialize};

use crate::config::{PipelineConfig, ShapMode};
use crate::corpus::LectureBundle;
use crate::emolex::{predict_text_emotion, TextEmotionModel, TextEmotionPrediction};
use crate::emotion::EmotionDistribution;
use crate::error::Result;
use crate::explain::{
    feedback_report, shapley_exact, shapley_sampled, FeedbackReport, ShapleyAttribution,
};
use crate::forest::ForestModel;
use crate::fusion::{fuse, scalarize_branches, BranchScores, FusionCoefficients};
use crate::objcount::{object_rate_feature, ObjectActivity};
use crate::speechnet::{predict_emotion_timeline, CnnModel, EmotionTimeline};
use crate::textfeat::{extract_text_features, LexiconSet, TextFeatureVector};

pub const SCORE_FORMAT_VERSION: u32 = 1;

/// Where the text-emotion distribution comes from.
#[derive(Debug, Clone)]
pub enum TextEmotionSource {
    Model(TextEmotionModel),
    /// Probabilities computed outside this crate for this lecture.
    External(EmotionDistribution),
}

impl TextEmotionSource {
    pub fn predict(&self, transcript: &str) -> TextEmotionPrediction {
        match self {
            TextEmotionSource::Model(m) => predict_text_emotion(m, transcript),
            TextEmotionSource::External(d) => TextEmotionPrediction {
                distribution: d.clone(),
                sentences: 0,
                empty: false,
            },
        }
    }
}

/// Trained artifacts needed to score a lecture.
#[derive(Debug, Clone)]
pub struct LectureModels {
    pub forest: ForestModel,
    pub speech: CnnModel,
    pub text: TextEmotionSource,
    pub coefficients: FusionCoefficients,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LectureScore {
    pub format_version: u32,
    pub id: String,
    pub score: f64,
    pub branches: BranchScores,
    pub coefficients: FusionCoefficients,
    pub text_features: TextFeatureVector,
    pub text_emotion: TextEmotionPrediction,
    pub speech_timeline: EmotionTimeline,
    pub object_activity: ObjectActivity,
    /// Normalized viewer rating, when the manifest has one.
    pub rating: Option<f64>,
}

pub fn lecture_text_features(
    bundle: &LectureBundle,
    lexicons: &LexiconSet,
) -> Result<TextFeatureVector> {
    extract_text_features(&bundle.transcript, &bundle.title, bundle.duration, lexicons)
}

pub fn score_lecture(
    bundle: &LectureBundle,
    models: &LectureModels,
    lexicons: &LexiconSet,
    config: &PipelineConfig,
) -> Result<LectureScore> {
    bundle.validate()?;
    models.coefficients.validate()?;
    let text_features = lecture_text_features(bundle, lexicons)?;
    let x1 = models.forest.predict(&text_features);
    let text_emotion = models.text.predict(&bundle.transcript);
    let speech_timeline = predict_emotion_timeline(
        &models.speech,
        &bundle.audio,
        bundle.sample_rate,
        &config.dsp,
    )?;
    let object_activity =
        object_rate_feature(&bundle.detections, bundle.duration, &config.objects)?;
    let branches = scalarize_branches(
        x1,
        &text_emotion.distribution,
        &speech_timeline,
        &object_activity,
    );
    Ok(LectureScore {
        format_version: SCORE_FORMAT_VERSION,
        id: bundle.id.clone(),
        score: fuse(&models.coefficients, &branches),
        branches,
        coefficients: models.coefficients,
        text_features,
        text_emotion,
        speech_timeline,
        object_activity,
        rating: bundle.rating,
    })
}

/// Attribution of the forest's prediction for `features` against
/// `background`, using the configured mode.
pub fn explain_forest(
    forest: &ForestModel,
    features: &TextFeatureVector,
    background: &[Vec<f64>],
    config: &PipelineConfig,
) -> Result<ShapleyAttribution> {
    let f = |x: &[f64]| forest.predict_slice(x);
    let x = features.to_array();
    match config.shap.mode {
        ShapMode::Exact => shapley_exact(&f, &x, background),
        ShapMode::Sampled => shapley_sampled(
            &f,
            &x,
            background,
            config.shap.permutations,
            config.component_seed("shap"),
        ),
    }
}

/// Builds the report for a scored lecture; attributions are included when a
/// background sample is given.
pub fn report_lecture(
    scored: &LectureScore,
    forest: &ForestModel,
    background: Option<&[Vec<f64>]>,
    config: &PipelineConfig,
) -> Result<FeedbackReport> {
    let shapley = background
        .map(|bg| explain_forest(forest, &scored.text_features, bg, config))
        .transpose()?;
    let mut report = feedback_report(
        &scored.text_features,
        &scored.text_emotion.distribution,
        &scored.speech_timeline,
        &scored.object_activity,
        &scored.coefficients,
        &scored.branches,
        shapley.as_ref(),
        &config.thresholds,
    )?;
    report.id = Some(scored.id.clone());
    Ok(report)
}

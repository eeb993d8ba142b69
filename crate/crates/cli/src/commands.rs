//! Implementation of each subcommand.

use std::io::Write;
use std::path::{Path, PathBuf};

use clue_core::config::PipelineConfig;
use clue_core::corpus::{
    load_feature_table, load_lecture_bundle, split_table, FeatureTable, LectureBundle,
};
use clue_core::emolex::{
    load_external_emotion_probs, load_text_corpus, text_accuracy,
    train_text_emotion as fit_text_emotion,
};
use clue_core::explain::{background_rows, shap_summary as summarize, write_shap_summary};
use clue_core::forest::{forest_mse, train_forest as fit_forest};
use clue_core::fusion::{
    finetune_speech, load_fusion_samples, text_variability, train_coefficients, FusionCoefficients,
    FusionOutcome, JointSample,
};
use clue_core::io::{write_atomic, write_bytes_atomic, write_json_atomic};
use clue_core::objcount::object_rate_feature;
use clue_core::pipeline::{
    lecture_text_features, report_lecture, score_lecture, LectureModels, TextEmotionSource,
};
use clue_core::speechnet::{
    accuracy, confusion_matrix, load_speech_dataset, prf_macro, train_cnn, window_features,
    CnnModel, Mode, SpeechDataset,
};
use clue_core::textfeat::{LexiconSet, FEATURE_NAMES};
use clue_core::{Error, ForestModel, Result, TextEmotionModel};
use rayon::prelude::*;
use serde::Serialize;

fn out_dir(out: Option<&Path>) -> PathBuf {
    out.map_or_else(|| PathBuf::from("."), Path::to_path_buf)
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    let text =
        serde_json::to_string_pretty(value).map_err(|e| Error::InvalidInput(e.to_string()))?;
    println!("{text}");
    Ok(())
}

fn csv_err(context: &str) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::Csv {
        context: context.to_string(),
        message: e.to_string(),
    }
}

pub fn dump_config(cfg: &PipelineConfig, out: Option<&Path>) -> Result<()> {
    let text = cfg.to_toml_string()?;
    match out {
        Some(dir) => write_bytes_atomic(&dir.join("config.toml"), text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load_bundles(cfg: &PipelineConfig, manifests: &[PathBuf]) -> Result<Vec<LectureBundle>> {
    manifests
        .par_iter()
        .map(|m| load_lecture_bundle(m, cfg.dsp.sample_rate))
        .collect()
}

pub fn extract_features(
    cfg: &PipelineConfig,
    manifests: &[PathBuf],
    out: Option<&Path>,
) -> Result<()> {
    let lexicons = cfg.lexicons.load()?;
    let dir = out_dir(out);
    let extracted = manifests
        .par_iter()
        .map(|m| {
            let bundle = load_lecture_bundle(m, cfg.dsp.sample_rate)?;
            let text = lecture_text_features(&bundle, &lexicons)?;
            let windows = window_features(&bundle.audio, bundle.sample_rate, &cfg.dsp)?;
            Ok((bundle.id, bundle.rating, text, windows))
        })
        .collect::<Result<Vec<_>>>()?;

    let features_path = dir.join("features.csv");
    write_atomic(&features_path, |w| {
        let ctx = "features.csv";
        let mut csv = csv::Writer::from_writer(w);
        let mut header = vec!["id"];
        header.extend(FEATURE_NAMES);
        header.push(clue_core::corpus::LABEL_COLUMN);
        csv.write_record(&header).map_err(csv_err(ctx))?;
        for (id, rating, text, _) in &extracted {
            if rating.is_none() {
                log::warn!("lecture {id} has no rating; its label cell is left empty");
            }
            let mut row = vec![id.clone()];
            row.extend(text.to_array().iter().map(f64::to_string));
            row.push(rating.map(|r| r.to_string()).unwrap_or_default());
            csv.write_record(&row).map_err(csv_err(ctx))?;
        }
        csv.flush().map_err(|e| Error::Csv {
            context: ctx.into(),
            message: e.to_string(),
        })
    })?;

    let windows_path = dir.join("speech_windows.csv");
    write_atomic(&windows_path, |w| {
        let ctx = "speech_windows.csv";
        let mut csv = csv::Writer::from_writer(w);
        let mut header = vec!["id".to_string(), "start".to_string()];
        header.extend((0..clue_core::dsp::SPEECH_FEATURE_LEN).map(|i| format!("f{i}")));
        csv.write_record(&header).map_err(csv_err(ctx))?;
        for (id, _, _, windows) in &extracted {
            for (start, v) in windows {
                let mut row = vec![id.clone(), start.to_string()];
                row.extend(v.iter().map(f64::to_string));
                csv.write_record(&row).map_err(csv_err(ctx))?;
            }
        }
        csv.flush().map_err(|e| Error::Csv {
            context: ctx.into(),
            message: e.to_string(),
        })
    })?;

    print_json(&serde_json::json!({
        "lectures": extracted.len(),
        "windows": extracted.iter().map(|e| e.3.len()).sum::<usize>(),
        "features": features_path,
        "speech_windows": windows_path,
        "lexicon_version": lexicons.version,
    }))
}

pub fn train_forest(cfg: &PipelineConfig, features: &Path, out: Option<&Path>) -> Result<()> {
    let table = load_feature_table(features)?;
    let (train, heldout) = split_table(
        &table,
        cfg.split.train_fraction,
        cfg.component_seed("split"),
    )?;
    let model = fit_forest(&train, &cfg.forest, cfg.component_seed("forest"))?;
    let path = out_dir(out).join("forest.json");
    model.save(&path)?;
    print_json(&serde_json::json!({
        "model": path,
        "train_rows": train.len(),
        "heldout_rows": heldout.len(),
        "train_mse": forest_mse(&model, &train)?,
        "heldout_mse": forest_mse(&model, &heldout)?,
    }))
}

#[derive(Serialize)]
struct SpeechEvaluation {
    classes: Vec<&'static str>,
    accuracy: f64,
    confusion: Vec<Vec<u64>>,
    metrics: clue_core::speechnet::PrfReport,
}

fn evaluate_speech(model: &CnnModel, data: &SpeechDataset) -> Result<SpeechEvaluation> {
    let probs = model.forward(&data.features, Mode::Eval)?;
    let predicted: Vec<usize> = probs
        .iter()
        .map(|p| clue_core::EmotionDistribution::new(p.clone()).map(|d| d.argmax()))
        .collect::<Result<_>>()?;
    let confusion = confusion_matrix(
        &data.labels,
        &predicted,
        clue_core::speechnet::N_SPEECH_CLASSES,
    )?;
    Ok(SpeechEvaluation {
        classes: clue_core::emotion::SPEECH_EMOTIONS.to_vec(),
        accuracy: accuracy(model, data)?,
        metrics: prf_macro(&confusion)?,
        confusion,
    })
}

pub fn train_speech(
    cfg: &PipelineConfig,
    index: &Path,
    validation: Option<&Path>,
    out: Option<&Path>,
) -> Result<()> {
    let train = load_speech_dataset(index, &cfg.dsp)?;
    let val = validation
        .map(|v| load_speech_dataset(v, &cfg.dsp))
        .transpose()?;
    let (model, history) = train_cnn(
        &train,
        val.as_ref(),
        &cfg.speech,
        cfg.component_seed("speech"),
    )?;
    let dir = out_dir(out);
    let model_path = dir.join("speech.cnn");
    let history_path = dir.join("speech_history.csv");
    let eval_path = dir.join("speech_eval.json");
    model.save(&model_path)?;
    write_atomic(&history_path, |w| history.write_csv(w))?;
    let evaluation = evaluate_speech(&model, val.as_ref().unwrap_or(&train))?;
    write_json_atomic(&eval_path, &evaluation)?;
    print_json(&serde_json::json!({
        "model": model_path,
        "history": history_path,
        "evaluation": eval_path,
        "epochs": history.epochs.len(),
        "final": history.last(),
        "macro_precision": evaluation.metrics.macro_precision,
        "macro_recall": evaluation.metrics.macro_recall,
        "macro_f1": evaluation.metrics.macro_f1,
    }))
}

pub fn train_text_emotion(cfg: &PipelineConfig, corpus: &Path, out: Option<&Path>) -> Result<()> {
    let data = load_text_corpus(corpus)?;
    let model = fit_text_emotion(&data, &cfg.text_emotion, cfg.component_seed("text_emotion"))?;
    let path = out_dir(out).join("text_emotion.json");
    model.save(&path)?;
    print_json(&serde_json::json!({
        "model": path,
        "sentences": data.len(),
        "vocabulary": model.vocabulary.len(),
        "train_accuracy": text_accuracy(&model, &data),
    }))
}

pub struct FusionInputs<'a> {
    pub samples: Option<&'a Path>,
    pub finetune_speech: bool,
    pub manifests: &'a [PathBuf],
    pub forest: Option<&'a Path>,
    pub speech: Option<&'a Path>,
    pub text_model: Option<&'a Path>,
    pub text_probs: Option<&'a Path>,
}

fn text_source(model: Option<&Path>, probs: Option<&Path>) -> Result<TextSourceSpec> {
    match (model, probs) {
        (Some(m), _) => Ok(TextSourceSpec::Model(TextEmotionModel::load(m)?)),
        (None, Some(p)) => Ok(TextSourceSpec::External(p.to_path_buf())),
        (None, None) => Err(Error::InvalidInput(
            "a text-emotion model or external probabilities are required".into(),
        )),
    }
}

/// Text-emotion input as given on the command line; external probabilities
/// are resolved per lecture.
enum TextSourceSpec {
    Model(TextEmotionModel),
    External(PathBuf),
}

impl TextSourceSpec {
    fn for_lecture(&self, id: &str) -> Result<TextEmotionSource> {
        match self {
            TextSourceSpec::Model(m) => Ok(TextEmotionSource::Model(m.clone())),
            TextSourceSpec::External(p) => {
                let file = if p.is_dir() {
                    p.join(format!("{id}.json"))
                } else {
                    p.clone()
                };
                Ok(TextEmotionSource::External(load_external_emotion_probs(
                    &file,
                )?))
            }
        }
    }
}

fn need<'a>(p: Option<&'a Path>, flag: &str) -> Result<&'a Path> {
    p.ok_or_else(|| Error::InvalidInput(format!("{flag} is required")))
}

fn write_fusion_outputs(dir: &Path, outcome: &FusionOutcome) -> Result<(PathBuf, PathBuf)> {
    let coef_path = dir.join("fusion.json");
    let history_path = dir.join("fusion_history.csv");
    outcome.coefficients.save(&coef_path)?;
    write_atomic(&history_path, |w| outcome.write_history_csv(w))?;
    Ok((coef_path, history_path))
}

pub fn train_fusion(
    cfg: &PipelineConfig,
    inputs: &FusionInputs<'_>,
    out: Option<&Path>,
) -> Result<()> {
    let dir = out_dir(out);
    if !inputs.finetune_speech {
        let path = inputs
            .samples
            .ok_or_else(|| Error::InvalidInput("--samples is required".into()))?;
        let samples = load_fusion_samples(path)?;
        let outcome = train_coefficients(&samples, &cfg.fusion)?;
        let (coef_path, history_path) = write_fusion_outputs(&dir, &outcome)?;
        return print_json(&serde_json::json!({
            "coefficients": outcome.coefficients,
            "file": coef_path,
            "history": history_path,
            "iterations": outcome.history.len() - 1,
            "converged": outcome.converged,
            "initial_loss": outcome.history[0].loss,
            "final_loss": outcome.final_loss(),
        }));
    }

    let forest = ForestModel::load(need(inputs.forest, "--forest")?)?;
    let speech = CnnModel::load(need(inputs.speech, "--speech")?)?;
    let text = text_source(inputs.text_model, inputs.text_probs)?;
    let lexicons = cfg.lexicons.load()?;
    let bundles = load_bundles(cfg, inputs.manifests)?;
    let samples = bundles
        .par_iter()
        .map(|b| joint_sample(b, &forest, &text, &lexicons, cfg))
        .collect::<Result<Vec<_>>>()?;
    let start = FusionCoefficients::from_array(
        clue_core::fusion::INITIAL_COEFFICIENTS,
        cfg.fusion.theta,
        cfg.fusion.constrained,
    );
    let joint = finetune_speech(&speech, &start, &samples, &cfg.fusion)?;
    let outcome = FusionOutcome {
        coefficients: joint.coefficients,
        history: joint.history,
        converged: false,
    };
    let (coef_path, history_path) = write_fusion_outputs(&dir, &outcome)?;
    let speech_path = dir.join("speech.finetuned.cnn");
    joint.model.save(&speech_path)?;
    print_json(&serde_json::json!({
        "coefficients": outcome.coefficients,
        "file": coef_path,
        "history": history_path,
        "speech_model": speech_path,
        "iterations": outcome.history.len() - 1,
        "initial_loss": outcome.history[0].loss,
        "final_loss": outcome.final_loss(),
    }))
}

fn joint_sample(
    bundle: &LectureBundle,
    forest: &ForestModel,
    text: &TextSourceSpec,
    lexicons: &LexiconSet,
    cfg: &PipelineConfig,
) -> Result<JointSample> {
    let y_hat = bundle
        .rating
        .ok_or_else(|| Error::InvalidInput(format!("lecture {} has no rating", bundle.id)))?;
    let features = lecture_text_features(bundle, lexicons)?;
    let text_dist = text
        .for_lecture(&bundle.id)?
        .predict(&bundle.transcript)
        .distribution;
    let activity = object_rate_feature(&bundle.detections, bundle.duration, &cfg.objects)?;
    let windows = window_features(&bundle.audio, bundle.sample_rate, &cfg.dsp)?
        .into_iter()
        .map(|(_, v)| v)
        .collect();
    Ok(JointSample {
        x1: forest.predict(&features),
        x2: text_variability(&text_dist),
        x4: activity.x4,
        windows,
        y_hat,
    })
}

pub struct ScoreInputs<'a> {
    pub manifests: &'a [PathBuf],
    pub forest: &'a Path,
    pub speech: &'a Path,
    pub text_model: Option<&'a Path>,
    pub text_probs: Option<&'a Path>,
    pub coefficients: Option<&'a Path>,
}

struct LoadedModels {
    forest: ForestModel,
    speech: CnnModel,
    text: TextSourceSpec,
    coefficients: FusionCoefficients,
}

fn load_models(cfg: &PipelineConfig, inputs: &ScoreInputs<'_>) -> Result<LoadedModels> {
    Ok(LoadedModels {
        forest: ForestModel::load(inputs.forest)?,
        speech: CnnModel::load(inputs.speech)?,
        text: text_source(inputs.text_model, inputs.text_probs)?,
        coefficients: match inputs.coefficients {
            Some(p) => FusionCoefficients::load(p)?,
            None => FusionCoefficients::from_array(
                clue_core::fusion::INITIAL_COEFFICIENTS,
                cfg.fusion.theta,
                cfg.fusion.constrained,
            ),
        },
    })
}

fn score_all(
    cfg: &PipelineConfig,
    inputs: &ScoreInputs<'_>,
    models: &LoadedModels,
) -> Result<Vec<clue_core::pipeline::LectureScore>> {
    let lexicons = cfg.lexicons.load()?;
    inputs
        .manifests
        .par_iter()
        .map(|m| {
            let bundle = load_lecture_bundle(m, cfg.dsp.sample_rate)?;
            let lecture_models = LectureModels {
                forest: models.forest.clone(),
                speech: models.speech.clone(),
                text: models.text.for_lecture(&bundle.id)?,
                coefficients: models.coefficients,
            };
            score_lecture(&bundle, &lecture_models, &lexicons, cfg)
        })
        .collect()
}

fn pretty<T: Serialize>(value: &T) -> Result<String> {
    let mut s =
        serde_json::to_string_pretty(value).map_err(|e| Error::InvalidInput(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

pub fn score(cfg: &PipelineConfig, inputs: &ScoreInputs<'_>, out: Option<&Path>) -> Result<()> {
    let models = load_models(cfg, inputs)?;
    let scores = score_all(cfg, inputs, &models)?;
    for s in &scores {
        let text = pretty(s)?;
        match out {
            Some(dir) => {
                write_bytes_atomic(&dir.join(format!("{}.score.json", s.id)), text.as_bytes())?
            }
            None => print!("{text}"),
        }
    }
    Ok(())
}

pub fn report(
    cfg: &PipelineConfig,
    inputs: &ScoreInputs<'_>,
    background: Option<&Path>,
    out: Option<&Path>,
) -> Result<()> {
    let models = load_models(cfg, inputs)?;
    let background = background
        .map(|p| load_feature_table(p).map(|t| background_rows(&t, cfg.shap.max_background)))
        .transpose()?;
    let scores = score_all(cfg, inputs, &models)?;
    let reports = scores
        .par_iter()
        .map(|s| report_lecture(s, &models.forest, background.as_deref(), cfg))
        .collect::<Result<Vec<_>>>()?;
    for (s, r) in scores.iter().zip(&reports) {
        let json = r.to_json()?;
        match out {
            Some(dir) => {
                write_bytes_atomic(&dir.join(format!("{}.report.json", s.id)), json.as_bytes())?;
                write_bytes_atomic(
                    &dir.join(format!("{}.report.txt", s.id)),
                    r.render_text().as_bytes(),
                )?;
            }
            None => print!("{json}"),
        }
    }
    Ok(())
}

pub fn shap_summary(
    cfg: &PipelineConfig,
    features: &Path,
    forest: &Path,
    out: Option<&Path>,
) -> Result<()> {
    let table: FeatureTable = load_feature_table(features)?;
    let model = ForestModel::load(forest)?;
    let background = background_rows(&table, cfg.shap.max_background);
    let attributions = summarize(&table, &model, &background)?;
    match out {
        Some(dir) => write_atomic(&dir.join("shap_summary.csv"), |w| {
            write_shap_summary(&attributions, w)
        }),
        None => {
            let mut buf = Vec::new();
            write_shap_summary(&attributions, &mut buf)?;
            std::io::stdout().write_all(&buf).map_err(|e| Error::Io {
                path: "<stdout>".into(),
                source: e,
            })
        }
    }
}

//! Mini-batch training loop and per-epoch accuracy history.

use std::io::Write;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::model::{Adam, CnnModel, Mode};
use crate::emotion::argmax;
use crate::error::{Error, Result};
use crate::seed::rng_from_seed;

/// Samples per chunk when evaluating accuracy; eval mode makes chunking
/// invisible in the result.
const EVAL_CHUNK: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub epochs: usize,
    /// Stop after the first epoch whose train accuracy reaches this value.
    pub target_train_accuracy: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 16,
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            epochs: 190,
            target_train_accuracy: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::invalid("batch_size and epochs must be positive"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid(
                "learning_rate must be finite and nonnegative",
            ));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::invalid("Adam betas must lie in [0, 1)"));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::invalid("Adam epsilon must be positive"));
        }
        if let Some(t) = self.target_train_accuracy {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::invalid("target_train_accuracy must lie in [0, 1]"));
            }
        }
        Ok(())
    }

    pub fn optimizer(&self, model: &CnnModel) -> Adam {
        Adam::new(
            model,
            self.learning_rate,
            self.beta1,
            self.beta2,
            self.epsilon,
        )
    }
}

/// Feature vectors with class indices into [`crate::emotion::SPEECH_EMOTIONS`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SpeechDataset {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

impl SpeechDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// One Adam step on a batch: train-mode forward, backpropagation, running
/// statistics update, parameter update. Returns the batch loss.
pub fn train_step(
    model: &mut CnnModel,
    optimizer: &mut Adam,
    batch: &[Vec<f64>],
    labels: &[usize],
) -> Result<f64> {
    let (loss, grads, cache) = model.loss_and_gradients(batch, labels)?;
    model.bn1.update_running(&cache.bn1);
    model.bn2.update_running(&cache.bn2);
    optimizer.apply(model, &grads);
    Ok(loss)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_acc: f64,
    pub val_acc: f64,
    pub loss: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingHistory {
    pub epochs: Vec<EpochRecord>,
}

impl TrainingHistory {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for e in &self.epochs {
            w.serialize(e)
                .map_err(|e| Error::csv("training history", e))?;
        }
        w.flush().map_err(|e| Error::csv("training history", e))?;
        Ok(())
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.epochs.last()
    }
}

pub fn accuracy(model: &CnnModel, data: &SpeechDataset) -> Result<f64> {
    if data.is_empty() {
        return Ok(0.0);
    }
    let mut correct = 0usize;
    for (xs, ys) in data
        .features
        .chunks(EVAL_CHUNK)
        .zip(data.labels.chunks(EVAL_CHUNK))
    {
        let probs = model.forward(xs, Mode::Eval)?;
        correct += probs
            .iter()
            .zip(ys)
            .filter(|(p, y)| argmax(p) == **y)
            .count();
    }
    Ok(correct as f64 / data.len() as f64)
}

/// Trains a freshly initialized network. Each epoch shuffles the samples with
/// a seeded RNG and walks them in batches of `batch_size`; a trailing partial
/// batch is used when it holds at least two samples (batch statistics need
/// more than one). Train and validation accuracy are measured in eval mode
/// after every epoch.
pub fn train_cnn(
    train: &SpeechDataset,
    validation: Option<&SpeechDataset>,
    config: &TrainConfig,
    seed: u64,
) -> Result<(CnnModel, TrainingHistory)> {
    let model = CnnModel::init(crate::seed::derive_seed(seed, "speechnet.init"));
    continue_training(model, train, validation, config, seed)
}

/// Like [`train_cnn`], starting from an existing model.
pub fn continue_training(
    mut model: CnnModel,
    train: &SpeechDataset,
    validation: Option<&SpeechDataset>,
    config: &TrainConfig,
    seed: u64,
) -> Result<(CnnModel, TrainingHistory)> {
    config.validate()?;
    if train.features.len() != train.labels.len() {
        return Err(Error::invalid("features and labels differ in length"));
    }
    if train.len() < config.batch_size {
        return Err(Error::invalid(format!(
            "dataset has {} samples, fewer than one batch of {}",
            train.len(),
            config.batch_size
        )));
    }
    let mut rng = rng_from_seed(crate::seed::derive_seed(seed, "speechnet.shuffle"));
    let mut optimizer = config.optimizer(&model);
    let mut history = TrainingHistory::default();
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for idx in order.chunks(config.batch_size) {
            if idx.len() < 2 {
                continue;
            }
            let xs: Vec<Vec<f64>> = idx.iter().map(|&i| train.features[i].clone()).collect();
            let ys: Vec<usize> = idx.iter().map(|&i| train.labels[i]).collect();
            loss_sum += train_step(&mut model, &mut optimizer, &xs, &ys)?;
            batches += 1;
        }
        let train_acc = accuracy(&model, train)?;
        let val_acc = match validation {
            Some(v) => accuracy(&model, v)?,
            None => train_acc,
        };
        let loss = loss_sum / batches as f64;
        log::info!("epoch {epoch}: loss {loss:.5} train_acc {train_acc:.4} val_acc {val_acc:.4}");
        history.epochs.push(EpochRecord {
            epoch,
            train_acc,
            val_acc,
            loss,
        });
        if config.target_train_accuracy.is_some_and(|t| train_acc >= t) {
            break;
        }
    }
    model.mode = Mode::Eval;
    Ok((model, history))
}

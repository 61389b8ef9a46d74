//! Minibatch training with early stopping on validation loss.

use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::attack::LabelMatrix;
use crate::linalg::Matrix;
use crate::model::{DetectorModel, FeatureScaler, ModelCheckpoint, ModelSpec, WindowSet};
use crate::nn::loss::bce_loss;
use crate::nn::optim::{sgd_nesterov_step, OptimizerState, SgdConfig};
use crate::nn::Mode;
use crate::rng::{stream, substream, Stage};
use crate::scenario::MeasurementSeries;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub early_stop_patience: usize,
    /// Windows per minibatch.
    pub batch_size: usize,
    pub seed: u64,
    pub optimizer: SgdConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_epochs: 100,
            early_stop_patience: 75,
            batch_size: 256,
            seed: 0,
            optimizer: SgdConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidParameter("batch_size must be at least 1".into()));
        }
        if self.early_stop_patience > self.max_epochs {
            return Err(Error::InvalidParameter(format!(
                "patience {} exceeds max_epochs {}",
                self.early_stop_patience, self.max_epochs
            )));
        }
        self.optimizer.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
    /// Best validation loss seen up to and including this epoch.
    pub best_val_loss: f64,
    pub learning_rate: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
    pub stopped_early: bool,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters of the best validation epoch.
    pub model: DetectorModel,
    /// Optimizer state at the end of training.
    pub optimizer: OptimizerState,
    pub history: TrainHistory,
}

/// Mean BCE and binary accuracy of infer-mode predictions over every cell.
pub fn evaluate_loss(model: &DetectorModel, set: &WindowSet, batch_size: usize) -> Result<(f64, f64)> {
    let probs = model.predict_probs(set, batch_size)?;
    let targets: Vec<f64> = set.labels.values().iter().map(|&v| f64::from(v)).collect();
    let (loss, _) = bce_loss(&probs, &targets)?;
    let threshold = model.threshold();
    let correct = probs
        .iter()
        .zip(&targets)
        .filter(|(p, y)| (**p > threshold) == (**y > 0.5))
        .count();
    Ok((loss, correct as f64 / probs.len() as f64))
}

pub fn train(mut model: DetectorModel, train_set: &WindowSet, val_set: &WindowSet, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::EmptyPartition("training partition".into()));
    }
    if val_set.is_empty() {
        return Err(Error::EmptyPartition("validation partition".into()));
    }
    let window = model.window();
    let threshold = model.threshold();
    let n = model.n_nodes();
    let mut optimizer = OptimizerState::new(config.optimizer)?;
    let mut dropout_rng = stream(config.seed, Stage::Dropout);
    let mut history = TrainHistory::default();
    let mut best: Option<(f64, f64, DetectorModel)> = None;
    let mut no_improve = 0usize;
    let mut order: Vec<usize> = (0..train_set.len).collect();

    for epoch in 0..config.max_epochs {
        order.sort_unstable();
        order.shuffle(&mut substream(config.seed, Stage::Shuffle, epoch as u64));
        let (mut loss_sum, mut correct, mut cells) = (0.0, 0usize, 0usize);
        for chunk in order.chunks(config.batch_size) {
            if window * chunk.len() * n < 2 {
                continue;
            }
            let (x, y) = train_set.batch(chunk, window);
            let (probs, cache) = model.forward(&x, chunk.len(), Mode::Train, &mut dropout_rng)?;
            let (loss, dprobs) = bce_loss(&probs, &y)?;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, loss });
            }
            model.zero_grad();
            model.backward(&cache, &dprobs);
            model.update_running(&cache);
            sgd_nesterov_step(&mut model.params_mut(), &mut optimizer)?;
            loss_sum += loss * probs.len() as f64;
            cells += probs.len();
            correct += probs.iter().zip(&y).filter(|(p, t)| (**p > threshold) == (**t > 0.5)).count();
        }
        let (val_loss, val_accuracy) = evaluate_loss(&model, val_set, config.batch_size)?;
        if !val_loss.is_finite() {
            return Err(Error::Diverged { epoch, loss: val_loss });
        }
        let improved = match &best {
            None => true,
            Some((bl, ba, _)) => val_loss < *bl || (val_loss == *bl && val_accuracy > *ba),
        };
        if improved {
            best = Some((val_loss, val_accuracy, model.clone()));
            history.best_epoch = Some(epoch);
            no_improve = 0;
        } else {
            no_improve += 1;
        }
        history.epochs.push(EpochRecord {
            epoch,
            train_loss: if cells > 0 { loss_sum / cells as f64 } else { f64::NAN },
            train_accuracy: if cells > 0 { correct as f64 / cells as f64 } else { f64::NAN },
            val_loss,
            val_accuracy,
            best_val_loss: best.as_ref().map_or(val_loss, |b| b.0),
            learning_rate: optimizer.effective_lr(),
        });
        if no_improve > config.early_stop_patience {
            history.stopped_early = true;
            break;
        }
    }
    let model = best.map(|b| b.2).unwrap_or(model);
    Ok(TrainOutcome {
        model,
        optimizer,
        history,
    })
}

/// Labeled series for one partition.
#[derive(Debug, Clone, Copy)]
pub struct LabeledSeries<'a> {
    pub series: &'a MeasurementSeries,
    pub labels: &'a LabelMatrix,
}

/// Fits the scaler on the clean training cells, initializes the model from
/// the run seed, trains it and captures a checkpoint.
pub fn train_detector(
    spec: ModelSpec,
    a_hat: &Matrix,
    train_part: LabeledSeries<'_>,
    val_part: LabeledSeries<'_>,
    config: &TrainConfig,
) -> Result<ModelCheckpoint> {
    spec.validate()?;
    let scaler = FeatureScaler::fit(train_part.series, Some(train_part.labels))?;
    let train_set = WindowSet::new(train_part.series, train_part.labels, &scaler)?;
    let val_set = WindowSet::new(val_part.series, val_part.labels, &scaler)?;
    let model = DetectorModel::new(spec, a_hat, &mut stream(config.seed, Stage::Init))?;
    let outcome = train(model, &train_set, &val_set, config)?;
    Ok(ModelCheckpoint::capture(
        &outcome.model,
        &scaler,
        Some(&outcome.optimizer),
        &outcome.history,
    ))
}

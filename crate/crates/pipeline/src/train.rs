//! Minibatch Adam training with validation checkpointing and early stopping.

use serde::{Deserialize, Serialize};
use volcast_nn::autodiff::{clip_global_norm, Adam, AdamConfig, Graph, Tensor};
use volcast_nn::model::{Model, Sample};

use crate::dataset::BatchSampler;
use crate::{PipelineError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without a strict validation improvement before stopping.
    pub patience: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    /// Rescale gradients whose global L2 norm exceeds this.
    pub clip_norm: Option<f64>,
    /// Batch size for the prediction passes.
    pub eval_batch: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 32,
            max_epochs: 100,
            patience: 8,
            adam: AdamConfig::default(),
            seed: 0,
            clip_norm: None,
            eval_batch: 256,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.eval_batch == 0 {
            return Err(PipelineError::Config("batch sizes must be >= 1".into()));
        }
        if self.patience == 0 {
            return Err(PipelineError::Config("patience must be >= 1".into()));
        }
        if !(self.adam.lr > 0.0 && self.adam.lr.is_finite()) {
            return Err(PipelineError::Config("lr must be positive".into()));
        }
        Ok(())
    }
}

/// Losses in the units of the samples handed to [`train`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Epoch 0 is a full pass before any update; later epochs average the
    /// minibatch losses seen during the epoch.
    pub train_mse: f64,
    pub val_mse: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Holds the weights of `best_epoch`.
    pub model: Model,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

/// Predictions in sample units, `chunk` samples per graph.
pub fn predict_samples(model: &Model, samples: &[Sample], chunk: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(samples.len());
    for part in samples.chunks(chunk.max(1)) {
        let refs: Vec<&Sample> = part.iter().collect();
        out.extend(model.predict(&refs)?);
    }
    Ok(out)
}

pub fn mse_on(model: &Model, samples: &[Sample], chunk: usize) -> Result<f64> {
    let pred = predict_samples(model, samples, chunk)?;
    Ok(pred
        .iter()
        .zip(samples)
        .map(|(p, s)| (p - s.target).powi(2))
        .sum::<f64>()
        / samples.len() as f64)
}

fn diverged(epoch: usize, model: &Model) -> PipelineError {
    PipelineError::Diverged {
        epoch,
        last_finite: Box::new(model.clone()),
    }
}

/// Trains `model` on `train` and keeps the weights with the lowest
/// validation MSE seen after any epoch from 1 on.
pub fn train(mut model: Model, train: &[Sample], validation: &[Sample], cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(PipelineError::EmptySplit("train"));
    }
    if validation.is_empty() {
        return Err(PipelineError::EmptySplit("validation"));
    }
    let mut sampler = BatchSampler::new(train.len(), cfg.batch_size, cfg.seed)?;
    let mut adam = Adam::new(cfg.adam);
    let mut history = vec![EpochRecord {
        epoch: 0,
        train_mse: mse_on(&model, train, cfg.eval_batch)?,
        val_mse: mse_on(&model, validation, cfg.eval_batch)?,
    }];
    if !history[0].train_mse.is_finite() {
        return Err(diverged(0, &model));
    }
    let mut best = (f64::INFINITY, 0, model.params.clone());
    let mut wait = 0;
    let mut stopped_early = false;
    for epoch in 1..=cfg.max_epochs {
        let mut total = 0.0;
        for batch in sampler.epoch() {
            let refs: Vec<&Sample> = batch.iter().map(|&i| &train[i]).collect();
            let target = Tensor::new(vec![refs.len(), 1], refs.iter().map(|s| s.target).collect())?;
            let mut g = Graph::new();
            let bound = model.params.bind(&mut g);
            let pred = model.forward(&mut g, &bound, &refs)?;
            let loss = g.mse_loss(pred, &target)?;
            let value = g.value(loss).item().unwrap_or(f64::NAN);
            if !value.is_finite() {
                return Err(diverged(epoch, &model));
            }
            g.backward(loss)?;
            let mut grads = model.params.gradients(&g, &bound);
            if grads.values().any(|t| t.values().iter().any(|x| !x.is_finite())) {
                return Err(diverged(epoch, &model));
            }
            if let Some(max) = cfg.clip_norm {
                clip_global_norm(&mut grads, max);
            }
            let before = model.params.clone();
            adam.step(&mut model.params, &grads)?;
            if !model.params.all_finite() {
                model.params = before;
                return Err(diverged(epoch, &model));
            }
            total += value * refs.len() as f64;
        }
        let val_mse = mse_on(&model, validation, cfg.eval_batch)?;
        if !val_mse.is_finite() {
            return Err(diverged(epoch, &model));
        }
        history.push(EpochRecord {
            epoch,
            train_mse: total / train.len() as f64,
            val_mse,
        });
        if val_mse < best.0 {
            best = (val_mse, epoch, model.params.clone());
            wait = 0;
        } else {
            wait += 1;
            if wait >= cfg.patience {
                stopped_early = true;
                break;
            }
        }
    }
    let best_epoch = best.1;
    if best_epoch > 0 {
        model.params = best.2;
    }
    Ok(TrainOutcome {
        model,
        history,
        best_epoch,
        stopped_early,
    })
}

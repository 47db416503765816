//! Trained-model checkpoints: weights plus the config, frozen embeddings,
//! normalizer and training history needed to predict again.

use serde::{Deserialize, Serialize};
use volcast_nn::autodiff::{Checkpoint, Tensor};
use volcast_nn::model::{Model, ModelConfig};

use crate::dataset::Normalizer;
use crate::train::EpochRecord;
use crate::{PipelineError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Metadata {
    model: ModelConfig,
    embeddings: Tensor,
    normalizer: Normalizer,
    history: Vec<EpochRecord>,
    best_epoch: usize,
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub model: Model,
    pub normalizer: Normalizer,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
}

impl TrainedModel {
    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let meta = Metadata {
            model: self.model.config.clone(),
            embeddings: self.model.embeddings.clone(),
            normalizer: self.normalizer,
            history: self.history.clone(),
            best_epoch: self.best_epoch,
        };
        Ok(Checkpoint::new(&self.model.params, serde_json::to_value(meta)?))
    }

    /// Rebuilds the network and checks the stored weights against its layout.
    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let meta: Metadata = serde_json::from_value(ckpt.metadata.clone())?;
        let mut model = Model::new(meta.model, meta.embeddings, 0)?;
        let params = ckpt.params();
        let layout = |p: &volcast_nn::autodiff::ParamStore| {
            p.iter()
                .map(|(k, t)| (k.clone(), t.shape().to_vec()))
                .collect::<Vec<_>>()
        };
        if layout(&params) != layout(&model.params) {
            return Err(PipelineError::Config(
                "checkpoint weights do not match its model config".into(),
            ));
        }
        model.params = params;
        Ok(TrainedModel {
            model,
            normalizer: meta.normalizer,
            history: meta.history,
            best_epoch: meta.best_epoch,
        })
    }
}

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Result, TrainConfig, TrainError};
use crate::data::Normalization;
use crate::network::DaSpsModel;
use crate::tensor::Tensor;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// Everything needed to rebuild a trained model and its input transform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub config: TrainConfig,
    pub target: String,
    pub covariates: Vec<String>,
    /// Statistics for the covariates followed by the target.
    pub normalization: Normalization,
    pub best_epoch: usize,
    pub best_valid_mae: f64,
    pub tensors: Vec<NamedTensor>,
}

impl Checkpoint {
    pub fn from_model(
        model: &DaSpsModel,
        config: &TrainConfig,
        target: &str,
        covariates: &[String],
        normalization: &Normalization,
        best_epoch: usize,
        best_valid_mae: f64,
    ) -> Self {
        let tensors = model
            .store()
            .iter()
            .map(|(name, t)| NamedTensor {
                name: name.to_string(),
                shape: t.shape().to_vec(),
                data: t.data().to_vec(),
            })
            .collect();
        Self {
            version: CHECKPOINT_VERSION,
            config: config.clone(),
            target: target.to_string(),
            covariates: covariates.to_vec(),
            normalization: normalization.clone(),
            best_epoch,
            best_valid_mae,
            tensors,
        }
    }

    /// Rebuilds the model; every parameter must be present with its exact shape.
    pub fn model(&self) -> Result<DaSpsModel> {
        let mc = self.config.model_config(self.covariates.len());
        let mut model = DaSpsModel::new(mc, self.config.seed)?;
        let store = model.store_mut();
        if store.len() != self.tensors.len() {
            return Err(TrainError::Checkpoint(format!(
                "checkpoint holds {} tensors, model expects {}",
                self.tensors.len(),
                store.len()
            )));
        }
        let names = store.names().to_vec();
        for (slot, name) in store.tensors_mut().iter_mut().zip(&names) {
            let saved = self
                .tensors
                .iter()
                .find(|t| &t.name == name)
                .ok_or_else(|| TrainError::Checkpoint(format!("missing tensor '{name}'")))?;
            if saved.shape != slot.shape() {
                return Err(TrainError::Checkpoint(format!(
                    "tensor '{name}' has shape {:?}, model expects {:?}",
                    saved.shape,
                    slot.shape()
                )));
            }
            *slot = Tensor::new(saved.shape.clone(), saved.data.clone())
                .map_err(|e| TrainError::Checkpoint(format!("tensor '{name}': {e}")))?;
        }
        Ok(model)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ck: Self =
            serde_json::from_str(text).map_err(|e| TrainError::Checkpoint(e.to_string()))?;
        if ck.version != CHECKPOINT_VERSION {
            return Err(TrainError::Checkpoint(format!(
                "unsupported checkpoint version {} (expected {CHECKPOINT_VERSION})",
                ck.version
            )));
        }
        Ok(ck)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        Ok(std::fs::write(path, self.to_json())?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

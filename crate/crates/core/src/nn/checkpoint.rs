//! Decimal-text model checkpoints (JSON). Floats are written in shortest
//! round-trip form, so a save/load cycle is bit-exact.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::ModelParams;
use super::train::{TrainConfig, TrainedModel};
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "b2t-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct TensorRecord {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    version: u32,
    feature_dim: usize,
    train_config: TrainConfig,
    tensors: Vec<TensorRecord>,
}

pub fn checkpoint_to_string(model: &TrainedModel) -> Result<String> {
    let feature_dim = model.params.config.input_dim / model.config.window;
    let file = CheckpointFile {
        format: CHECKPOINT_FORMAT.into(),
        version: CHECKPOINT_VERSION,
        feature_dim,
        train_config: model.config.clone(),
        tensors: model
            .params
            .tensors()
            .into_iter()
            .map(|(name, shape, data)| TensorRecord {
                name,
                shape,
                data: data.to_vec(),
            })
            .collect(),
    };
    Ok(serde_json::to_string(&file)?)
}

pub fn checkpoint_from_str(text: &str) -> Result<TrainedModel> {
    let file: CheckpointFile = serde_json::from_str(text)?;
    if file.format != CHECKPOINT_FORMAT {
        return Err(Error::Protocol(format!("not a checkpoint: format {:?}", file.format)));
    }
    if file.version != CHECKPOINT_VERSION {
        return Err(Error::Protocol(format!("unsupported checkpoint version {}", file.version)));
    }
    file.train_config.validate()?;
    let mut params = ModelParams::zeros(file.train_config.model_config(file.feature_dim));
    let layout = params.layout();
    if layout.len() != file.tensors.len() {
        return Err(Error::Shape(format!(
            "checkpoint has {} tensors, config implies {}",
            file.tensors.len(),
            layout.len()
        )));
    }
    for (((name, shape), rec), dst) in layout.iter().zip(&file.tensors).zip(params.slices_mut()) {
        if *name != rec.name || *shape != rec.shape || rec.data.len() != dst.len() {
            return Err(Error::Shape(format!(
                "tensor {} {:?} ({} values) does not match expected {} {:?}",
                rec.name,
                rec.shape,
                rec.data.len(),
                name,
                shape
            )));
        }
        dst.copy_from_slice(&rec.data);
    }
    Ok(TrainedModel {
        params,
        config: file.train_config,
    })
}

pub fn save_checkpoint(path: impl AsRef<Path>, model: &TrainedModel) -> Result<()> {
    fs::write(path, checkpoint_to_string(model)?)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<TrainedModel> {
    checkpoint_from_str(&fs::read_to_string(path)?)
}

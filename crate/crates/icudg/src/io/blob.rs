//! Binary artifacts: a little-endian `u64` header length, a JSON header,
//! then a little-endian float payload.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use icudg_core::autodiff::Matrix;
use icudg_core::features::{feature_names, FeatureTensor, N_FEATURES};
use icudg_core::nn::{Model, ModelConfig};
use icudg_core::training::TrainConfig;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{AppError, AppResult};

pub const CHECKPOINT_FORMAT: &str = "icudg-checkpoint/1";
pub const TENSOR_FORMAT: &str = "icudg-tensors/1";

fn write_blob<H: Serialize>(path: &Path, header: &H, payload: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> AppResult<()> {
    let io = |e| AppError::io(path, e);
    let json = serde_json::to_vec(header).map_err(|e| AppError::Runtime(e.to_string()))?;
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    w.write_all(&(json.len() as u64).to_le_bytes()).map_err(io)?;
    w.write_all(&json).map_err(io)?;
    payload(&mut w).map_err(io)?;
    w.flush().map_err(io)
}

fn read_blob<H: DeserializeOwned>(path: &Path) -> AppResult<(H, Vec<u8>)> {
    let io = |e| AppError::io(path, e);
    let bad = |m: String| AppError::Parse { path: path.to_path_buf(), line: 0, message: m };
    let mut r = BufReader::new(File::open(path).map_err(io)?);
    let mut len = [0u8; 8];
    r.read_exact(&mut len).map_err(io)?;
    let len = u64::from_le_bytes(len) as usize;
    let mut json = vec![0u8; len];
    r.read_exact(&mut json).map_err(|e| bad(format!("truncated header: {e}")))?;
    let header = serde_json::from_slice(&json).map_err(|e| bad(format!("invalid header: {e}")))?;
    let mut payload = Vec::new();
    r.read_to_end(&mut payload).map_err(io)?;
    Ok((header, payload))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format: String,
    pub model: ModelConfig,
    pub seed: u64,
    pub names: Vec<String>,
    pub shapes: Vec<(usize, usize)>,
    pub train: TrainConfig,
    pub best_epoch: usize,
    pub best_val_loss: f64,
}

pub fn save_checkpoint(path: &Path, model: &Model, train: &TrainConfig, best_epoch: usize, best_val_loss: f64) -> AppResult<()> {
    let header = CheckpointHeader {
        format: CHECKPOINT_FORMAT.into(),
        model: model.config,
        seed: model.seed,
        names: model.names.clone(),
        shapes: model.params.iter().map(Matrix::shape).collect(),
        train: train.clone(),
        best_epoch,
        best_val_loss,
    };
    write_blob(path, &header, |w| {
        for p in &model.params {
            for x in p.as_slice() {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        Ok(())
    })
}

pub fn load_checkpoint(path: &Path) -> AppResult<(Model, CheckpointHeader)> {
    let (h, payload): (CheckpointHeader, _) = read_blob(path)?;
    let bad = |m: &str| AppError::Parse { path: path.to_path_buf(), line: 0, message: m.into() };
    if h.format != CHECKPOINT_FORMAT || h.names.len() != h.shapes.len() {
        return Err(bad("not a checkpoint"));
    }
    let total: usize = h.shapes.iter().map(|(r, c)| r * c).sum();
    if payload.len() != total * 8 {
        return Err(bad("parameter payload does not match the header shapes"));
    }
    let mut values = payload.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")));
    let mut params = Vec::with_capacity(h.shapes.len());
    for &(r, c) in &h.shapes {
        params.push(Matrix::from_vec(r, c, values.by_ref().take(r * c).collect())?);
    }
    let model = Model { config: h.model, seed: h.seed, names: h.names.clone(), params };
    let reference = Model::init(h.model, h.seed)?;
    if reference.names != model.names || reference.params.iter().map(Matrix::shape).ne(model.params.iter().map(Matrix::shape)) {
        return Err(bad("checkpoint layout does not match its model config"));
    }
    Ok((model, h))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub stay_id: String,
    pub hours: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorHeader {
    pub format: String,
    pub p: usize,
    pub columns: Vec<String>,
    pub stays: Vec<TensorEntry>,
}

/// Dumps tensors as consecutive `hours x P` row-major `f32` blocks.
pub fn write_tensors<'a>(path: &Path, tensors: impl IntoIterator<Item = &'a FeatureTensor> + Clone) -> AppResult<()> {
    let header = TensorHeader {
        format: TENSOR_FORMAT.into(),
        p: N_FEATURES,
        columns: feature_names(),
        stays: tensors.clone().into_iter().map(|t| TensorEntry { stay_id: t.stay_id.clone(), hours: t.hours }).collect(),
    };
    write_blob(path, &header, |w| {
        for t in tensors {
            for x in &t.data {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        Ok(())
    })
}

pub fn read_tensors(path: &Path) -> AppResult<Vec<FeatureTensor>> {
    let (h, payload): (TensorHeader, _) = read_blob(path)?;
    let bad = |m: &str| AppError::Parse { path: path.to_path_buf(), line: 0, message: m.into() };
    if h.format != TENSOR_FORMAT {
        return Err(bad("not a tensor dump"));
    }
    let total: usize = h.stays.iter().map(|s| s.hours * h.p).sum();
    if payload.len() != total * 4 {
        return Err(bad("tensor payload does not match the header"));
    }
    let mut values = payload.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().expect("4-byte chunk")));
    Ok(h.stays
        .into_iter()
        .map(|s| FeatureTensor { data: values.by_ref().take(s.hours * h.p).collect(), stay_id: s.stay_id, hours: s.hours })
        .collect())
}

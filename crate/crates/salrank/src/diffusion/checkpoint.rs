//! Binary checkpoint persistence.
//!
//! Layout: 8-byte magic `SALRANK\0`, a little-endian u32 manifest length, a
//! JSON manifest (layer shapes, schedule constants, training seed, spatial
//! contract), then the parameter vector as little-endian f32 in
//! [`Model::flatten`] order. Loading always round-trips parameters through
//! f32, so a freshly trained model and one reloaded from disk decode
//! identically once both are saved.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::model::{LayerShape, Model, ModelConfig};
use super::schedule::NoiseSchedule;
use super::train::TrainConfig;

const MAGIC: &[u8; 8] = b"SALRANK\0";

/// Everything needed to reconstruct a model and its sampler besides the raw
/// parameter values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub layers: Vec<LayerShape>,
    pub param_count: usize,
    pub width: usize,
    pub height: usize,
    pub frames_per_clip: usize,
    pub t_steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    pub seed: u64,
}

impl Manifest {
    pub fn for_model(model: &Model, train: &TrainConfig) -> Self {
        Self {
            layers: model.manifest(),
            param_count: model.param_count(),
            width: model.config.width,
            height: model.config.height,
            frames_per_clip: model.config.frames_per_clip,
            t_steps: train.t_steps,
            beta_start: train.beta_start,
            beta_end: train.beta_end,
            seed: train.seed,
        }
    }

    pub fn schedule(&self) -> Result<NoiseSchedule> {
        NoiseSchedule::linear(self.t_steps, self.beta_start, self.beta_end)
    }
}

/// Serializes a model to checkpoint bytes.
pub fn to_bytes(model: &Model, train: &TrainConfig) -> Result<Vec<u8>> {
    let manifest = Manifest::for_model(model, train);
    let manifest_json = serde_json::to_vec(&manifest)?;
    let params = model.flatten();
    let mut out =
        Vec::with_capacity(8 + 4 + manifest_json.len() + 4 * params.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(manifest_json.len() as u32).to_le_bytes());
    out.extend_from_slice(&manifest_json);
    for p in params {
        out.extend_from_slice(&(p as f32).to_le_bytes());
    }
    Ok(out)
}

/// Parses checkpoint bytes back into a model (parameters go through f32)
/// and its manifest.
pub fn from_bytes(bytes: &[u8]) -> Result<(Model, Manifest)> {
    let fail = |msg: &str| Error::Parse {
        message: format!("checkpoint: {msg}"),
        raw: String::new(),
    };
    if bytes.len() < 12 || &bytes[..8] != MAGIC {
        return Err(fail("missing or wrong magic header"));
    }
    let mlen = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    if bytes.len() < 12 + mlen {
        return Err(fail("truncated manifest"));
    }
    let manifest: Manifest = serde_json::from_slice(&bytes[12..12 + mlen])?;
    let body = &bytes[12 + mlen..];
    if body.len() != 4 * manifest.param_count {
        return Err(fail(&format!(
            "expected {} parameter bytes, found {}",
            4 * manifest.param_count,
            body.len()
        )));
    }
    let config = ModelConfig {
        width: manifest.width,
        height: manifest.height,
        frames_per_clip: manifest.frames_per_clip,
    };
    let mut model = Model::init_training(config, 0)?;
    if model.manifest() != manifest.layers {
        return Err(fail("layer manifest does not match this build's architecture"));
    }
    let params: Vec<f64> = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    model.set_from_flat(&params)?;
    Ok((model, manifest))
}

/// Writes a checkpoint file.
pub fn save(path: &Path, model: &Model, train: &TrainConfig) -> Result<()> {
    // Round-trip through f32 so the in-memory model equals what a reader of
    // this file will reconstruct.
    fs::write(path, to_bytes(model, train)?).map_err(|e| Error::io(path, e))
}

/// Reads a checkpoint file.
pub fn load(path: &Path) -> Result<(Model, Manifest)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelState, TrainConfig};
use crate::codec::EncodedMatrix;
use crate::error::{Error, Result};
use crate::Slot;

pub const MODEL_SCHEMA_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    schema_version: u32,
    config: TrainConfig,
    seed: u64,
    encoder_seed: u64,
    num_classes: usize,
    feature_dim: usize,
    epoch: usize,
    tensors: BTreeMap<String, EncodedMatrix>,
}

fn named_slots(model: &mut ModelState) -> Vec<(String, &mut Slot)> {
    let (c, n) = (model.contexts.num_classes, model.contexts.num_prompts);
    let mut out: Vec<(String, &mut Slot)> = Vec::new();
    for (k, s) in model.contexts.slots_mut().enumerate() {
        out.push((format!("ctx.{}.{}", k / n, k % n), s));
    }
    debug_assert_eq!(out.len(), c * n);
    for (l, layer) in model.conv.layers.iter_mut().enumerate() {
        out.push((format!("conv.{l}.weight"), &mut layer.weight));
        out.push((format!("conv.{l}.bias"), &mut layer.bias));
    }
    out.push(("head.weight".into(), &mut model.head.weight));
    out.push(("head.bias".into(), &mut model.head.bias));
    out
}

pub fn save_model(model: &ModelState, path: &Path) -> Result<()> {
    let mut copy = model.clone();
    let tensors = named_slots(&mut copy)
        .into_iter()
        .map(|(name, s)| (name, EncodedMatrix::encode(&s.value)))
        .collect();
    let file = ModelFile {
        schema_version: MODEL_SCHEMA_VERSION,
        config: model.config.clone(),
        seed: model.config.seed,
        encoder_seed: model.config.encoder_seed,
        num_classes: model.num_classes,
        feature_dim: model.feature_dim,
        epoch: model.epoch,
        tensors,
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, serde_json::to_string(&file)? + "\n")?;
    Ok(())
}

/// Reads a model written by [`save_model`]. The frozen encoder is rebuilt
/// from its seed.
pub fn load_model(path: &Path) -> Result<ModelState> {
    let shown = path.display().to_string();
    let corrupt = |reason: String| Error::Corrupt {
        path: shown.clone(),
        reason,
    };
    let text = fs::read_to_string(path).map_err(|e| Error::NotFound(format!("{shown}: {e}")))?;
    let raw: serde_json::Value = serde_json::from_str(&text).map_err(|e| corrupt(e.to_string()))?;
    let found = raw
        .get("schema_version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| corrupt("missing schema_version".into()))?;
    if found != MODEL_SCHEMA_VERSION as u64 {
        return Err(Error::SchemaVersion {
            found: found as u32,
            expected: MODEL_SCHEMA_VERSION,
        });
    }
    let file: ModelFile = serde_json::from_value(raw).map_err(|e| corrupt(e.to_string()))?;
    if file.seed != file.config.seed || file.encoder_seed != file.config.encoder_seed {
        return Err(corrupt("seed fields disagree with the stored config".into()));
    }
    let mut model = ModelState::init(file.config, file.num_classes, file.feature_dim)?;
    model.epoch = file.epoch;
    let mut tensors = file.tensors;
    for (name, slot) in named_slots(&mut model) {
        let enc = tensors.remove(&name).ok_or_else(|| corrupt(format!("missing tensor {name}")))?;
        let value = enc.decode().map_err(|r| corrupt(format!("{name}: {r}")))?;
        if value.shape() != slot.value.shape() {
            return Err(corrupt(format!(
                "{name} is {:?}, expected {:?}",
                value.shape(),
                slot.value.shape()
            )));
        }
        if !value.is_finite() {
            return Err(corrupt(format!("{name} holds non-finite values")));
        }
        *slot = Slot::new(value);
    }
    if let Some(extra) = tensors.keys().next() {
        return Err(corrupt(format!("unexpected tensor {extra}")));
    }
    Ok(model)
}

//! Checkpoint directories: one OMCT file per tensor plus `manifest.json`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::Trainable;
use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::json::{read_json, write_stable};
use crate::omct;
use crate::pipeline::FrontEnd;
use crate::sce::PatchEncoder;
use crate::tensor::Tensor;

pub const MANIFEST: &str = "manifest.json";
pub const LOSS_CURVE: &str = "loss_curve.json";
const VISION_W: &str = "vision.w_enc";
const VISION_B: &str = "vision.b_enc";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub names: Vec<String>,
    pub shapes: Vec<Vec<usize>>,
    pub stage: u8,
    pub step: usize,
    pub seed: u64,
    pub config: PipelineConfig,
    /// Free-form run details (training flags, final loss, data file).
    #[serde(default)]
    pub run: serde_json::Value,
}

fn file_name(name: &str) -> String {
    format!("{name}.omct")
}

/// Write every tensor (frozen encoder included) and the manifest. An optional loss curve is
/// stored next to them.
pub fn save(
    dir: &Path,
    front: &FrontEnd,
    model: &Trainable,
    stage: u8,
    step: usize,
    run: serde_json::Value,
    loss_curve: Option<&[f64]>,
) -> Result<Manifest> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tensors = vec![
        (VISION_W.to_string(), front.encoder.weight().clone()),
        (VISION_B.to_string(), front.encoder.bias().clone()),
    ];
    tensors.extend(model.to_tensors()?);
    for (name, t) in &tensors {
        omct::write(t, dir.join(file_name(name)))?;
    }
    let manifest = Manifest {
        names: tensors.iter().map(|(n, _)| n.clone()).collect(),
        shapes: tensors.iter().map(|(_, t)| t.shape().to_vec()).collect(),
        stage,
        step,
        seed: front.config.seed,
        config: front.config.clone(),
        run,
    };
    write_stable(&manifest, dir.join(MANIFEST))?;
    if let Some(curve) = loss_curve {
        write_stable(&curve, dir.join(LOSS_CURVE))?;
    }
    Ok(manifest)
}

pub fn load(dir: &Path) -> Result<(FrontEnd, Trainable, Manifest)> {
    let manifest: Manifest = read_json(dir.join(MANIFEST))?;
    let read = |name: &str| -> Result<Tensor> {
        let pos = manifest
            .names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::Format(format!("checkpoint has no tensor {name}")))?;
        let t = omct::read(dir.join(file_name(name)))?;
        if t.shape() != manifest.shapes[pos].as_slice() {
            return Err(Error::Format(format!(
                "{name}: manifest shape {:?} but file holds {:?}",
                manifest.shapes[pos],
                t.shape()
            )));
        }
        Ok(t)
    };
    let encoder = PatchEncoder::from_tensors(manifest.config.patch, read(VISION_W)?, read(VISION_B)?)?;
    let front = FrontEnd::with_encoder(manifest.config.clone(), encoder)?;
    let mut model = Trainable::init(&manifest.config)?;
    model.load_tensors(read)?;
    Ok((front, model, manifest))
}

//! Conversion of trained networks to spiking networks and their simulation.

mod network;
mod neuron;

use std::path::Path;

pub use network::{
    convert, convert_with, evaluate_snn, Affine, Front, SimConfig, SimOutput, SimTrace,
    SnnEvaluation, SpikingLayer, SpikingNetwork,
};
pub use neuron::{neuron_step, NeuronKind, NeuronModel, NeuronState};

use crate::error::{Error, Result};
use crate::nets::ModelFile;

/// Writes the source model plus simulation settings under `extra.snn`;
/// loading re-runs the conversion.
pub fn save_snn(snn: &SpikingNetwork, mut file: ModelFile, path: &Path) -> Result<()> {
    let mut extra = match file.extra.take() {
        Some(serde_json::Value::Object(map)) => map,
        _ => serde_json::Map::new(),
    };
    let config = serde_json::to_value(snn.config)
        .map_err(|e| Error::Format(format!("snn settings: {e}")))?;
    extra.insert("snn".into(), config);
    file.extra = Some(serde_json::Value::Object(extra));
    file.save(path)
}

pub fn load_snn(path: &Path) -> Result<(ModelFile, SpikingNetwork)> {
    let file = ModelFile::load(path)?;
    let config: SimConfig = file
        .extra
        .as_ref()
        .and_then(|e| e.get("snn"))
        .ok_or_else(|| Error::Format(format!("{} is not a spiking network file", path.display())))
        .and_then(|v| {
            serde_json::from_value(v.clone())
                .map_err(|e| Error::Format(format!("snn settings: {e}")))
        })?;
    let params = file.params()?;
    let snn = convert(&file.spec, &params, config)?;
    Ok((file, snn))
}

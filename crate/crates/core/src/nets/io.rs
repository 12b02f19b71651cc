//! Versioned JSON model files with base64 little-endian `f64` tensors.

use std::collections::BTreeMap;
use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::model::Network;
use super::params::{ModelParams, Param};
use super::spec::{ModelSpec, TrainConfig};
use crate::error::{Error, Result};
use crate::numcore::Tensor;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub trainable: bool,
    pub data: String,
}

/// On-disk envelope; `extra` carries format extensions such as spiking settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub spec: ModelSpec,
    pub training_config: Option<TrainConfig>,
    pub metrics: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extra: Option<serde_json::Value>,
    pub tensors: Vec<TensorRecord>,
}

pub fn encode_f64s(values: &[f64]) -> String {
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    STANDARD.encode(bytes)
}

pub fn decode_f64s(text: &str) -> Result<Vec<f64>> {
    let bytes = STANDARD
        .decode(text)
        .map_err(|e| Error::Format(format!("bad tensor encoding: {e}")))?;
    if bytes.len() % 8 != 0 {
        return Err(Error::Format(
            "tensor byte length not a multiple of 8".into(),
        ));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

impl ModelFile {
    pub fn new(spec: &ModelSpec, params: &ModelParams) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            spec: spec.clone(),
            training_config: None,
            metrics: BTreeMap::new(),
            extra: None,
            tensors: params
                .params
                .iter()
                .map(|p| TensorRecord {
                    name: p.name.clone(),
                    shape: p.tensor.shape().to_vec(),
                    trainable: p.trainable,
                    data: encode_f64s(p.tensor.data()),
                })
                .collect(),
        }
    }

    /// Decodes and validates the tensors against the spec's layer shapes.
    pub fn params(&self) -> Result<ModelParams> {
        let params = ModelParams {
            params: self
                .tensors
                .iter()
                .map(|r| {
                    let data = decode_f64s(&r.data)?;
                    let tensor = Tensor::new(r.shape.clone(), data)
                        .map_err(|e| Error::Format(format!("tensor `{}`: {e}", r.name)))?;
                    Ok(Param {
                        name: r.name.clone(),
                        tensor,
                        trainable: r.trainable,
                    })
                })
                .collect::<Result<_>>()?,
        };
        Network::new(&self.spec)?
            .check_params(&params)
            .map_err(|e| Error::Format(e.to_string()))?;
        Ok(params)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model file serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let v: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::Format(format!("model file: {e}")))?;
        match v.get("format_version").and_then(|x| x.as_u64()) {
            Some(n) if n == FORMAT_VERSION as u64 => {}
            Some(n) => {
                return Err(Error::Format(format!(
                    "format version {n} unsupported (expected {FORMAT_VERSION})"
                )))
            }
            None => return Err(Error::Format("missing format_version".into())),
        }
        serde_json::from_value(v).map_err(|e| Error::Format(format!("model file: {e}")))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json() + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

pub fn save(spec: &ModelSpec, params: &ModelParams, path: &Path) -> Result<()> {
    ModelFile::new(spec, params).save(path)
}

pub fn load(path: &Path) -> Result<(ModelSpec, ModelParams)> {
    let file = ModelFile::load(path)?;
    let params = file.params()?;
    Ok((file.spec, params))
}

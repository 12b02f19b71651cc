use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::{Rng, Tensor};

/// Named tensor; batch-norm running statistics are not trainable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub tensor: Tensor,
    pub trainable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub params: Vec<Param>,
}

impl ModelParams {
    pub fn get(&self, name: &str) -> Option<&Param> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn data(&self, idx: usize) -> &[f64] {
        self.params[idx].tensor.data()
    }

    /// Number of trainable scalars.
    pub fn trainable_count(&self) -> usize {
        self.params
            .iter()
            .filter(|p| p.trainable)
            .map(|p| p.tensor.len())
            .sum()
    }

    /// Trainable values concatenated in parameter order.
    pub fn flat(&self) -> Vec<f64> {
        self.params
            .iter()
            .filter(|p| p.trainable)
            .flat_map(|p| p.tensor.data().iter().copied())
            .collect()
    }

    pub fn set_flat(&mut self, values: &[f64]) {
        let mut off = 0;
        for p in self.params.iter_mut().filter(|p| p.trainable) {
            let n = p.tensor.len();
            p.tensor.data_mut().copy_from_slice(&values[off..off + n]);
            off += n;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.tensor.is_finite())
    }
}

/// Concatenates gradients of trainable parameters in [`ModelParams::flat`] order.
pub fn flatten_grads(params: &ModelParams, grads: &[Tensor]) -> Vec<f64> {
    params
        .params
        .iter()
        .zip(grads)
        .filter(|(p, _)| p.trainable)
        .flat_map(|(_, g)| g.data().iter().copied())
        .collect()
}

#[derive(Debug, Clone)]
pub(crate) enum Init {
    /// Uniform in `±limit`; row `r` is drawn from the sub-stream keyed by `row_keys[r]`
    /// (or the row index when absent), so a row's values do not depend on the others.
    Uniform {
        limit: f64,
        row_keys: Option<Vec<String>>,
    },
    Zeros,
    Ones,
    /// LSTM gate bias: 1 on the forget block, 0 elsewhere.
    ForgetBias {
        hidden: usize,
    },
}

#[derive(Debug, Clone)]
pub(crate) struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
    pub trainable: bool,
}

impl ParamSpec {
    pub fn materialize(&self, root: &Rng) -> Tensor {
        let mut t = Tensor::zeros(&self.shape);
        let rows = self.shape[0];
        let cols = t.len() / rows;
        match &self.init {
            Init::Zeros => {}
            Init::Ones => t.data_mut().iter_mut().for_each(|v| *v = 1.0),
            Init::ForgetBias { hidden } => t.data_mut()[*hidden..2 * hidden]
                .iter_mut()
                .for_each(|v| *v = 1.0),
            Init::Uniform { limit, row_keys } => {
                for r in 0..rows {
                    let key = row_keys
                        .as_ref()
                        .map_or_else(|| r.to_string(), |k| k[r].clone());
                    let mut rng = root.stream(&format!("{}/{}", self.name, key));
                    for v in &mut t.data_mut()[r * cols..(r + 1) * cols] {
                        *v = rng.uniform(-limit, *limit);
                    }
                }
            }
        }
        t
    }

    pub fn check(&self, p: &Param) -> Result<()> {
        if p.name != self.name || p.tensor.shape() != self.shape.as_slice() {
            return Err(Error::Schema(format!(
                "parameter `{}` {:?} does not match expected `{}` {:?}",
                p.name,
                p.tensor.shape(),
                self.name,
                self.shape
            )));
        }
        Ok(())
    }
}

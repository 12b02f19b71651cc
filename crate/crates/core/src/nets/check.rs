//! Finite-difference verification of a model's analytic gradients.

use super::layers::Mode;
use super::model::Network;
use super::params::ModelParams;
use crate::encoding::EventWindow;
use crate::error::{Error, Result};
use crate::numcore::{grad_check_at, GradCheckReport, Rng};

/// Coordinates visited by [`model_grad_check`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coverage {
    /// Every trainable scalar.
    All,
    /// Up to `samples` seeded coordinates from each trainable tensor.
    PerTensor { samples: usize, seed: u64 },
}

/// Worst relative error over one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorCheck {
    pub name: String,
    pub report: GradCheckReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelGradCheck {
    pub loss: f64,
    pub tensors: Vec<TensorCheck>,
}

impl ModelGradCheck {
    pub fn max_rel_error(&self) -> f64 {
        self.tensors
            .iter()
            .map(|t| t.report.max_rel_error)
            .fold(0.0, f64::max)
    }

    pub fn checked(&self) -> usize {
        self.tensors.iter().map(|t| t.report.checked).sum()
    }

    pub fn worst(&self) -> Option<&TensorCheck> {
        self.tensors
            .iter()
            .max_by(|a, b| a.report.max_rel_error.total_cmp(&b.report.max_rel_error))
    }
}

/// Compares train-mode analytic gradients of the mean cross-entropy on
/// `windows` (dropout masks fixed by `dropout_seed`) with central differences
/// of step `eps`. Each objective evaluation reruns the network only from the
/// first op reading the perturbed tensor.
pub fn model_grad_check(
    net: &Network,
    params: &ModelParams,
    windows: &[&EventWindow],
    dropout_seed: u64,
    coverage: Coverage,
    eps: f64,
) -> Result<ModelGradCheck> {
    net.check_params(params)?;
    let mode = Mode::Train { dropout_seed };
    let target = net.spec().target;
    let labels: Vec<usize> = windows.iter().map(|w| w.label(target)).collect();
    let x = net.input(windows)?;
    let lg = net.loss_and_grads_act(params, x.clone(), &labels, mode)?;
    let acts = net.activations(params, x, mode);
    let rng = match coverage {
        Coverage::All => None,
        Coverage::PerTensor { seed, .. } => Some(Rng::new(seed)),
    };
    let mut tensors = Vec::new();
    for (pi, p) in params.params.iter().enumerate() {
        if !p.trainable {
            continue;
        }
        let from = net
            .ops
            .iter()
            .position(|op| op.param_indices().contains(&pi))
            .ok_or_else(|| {
                Error::Schema(format!("parameter `{}` is not used by any layer", p.name))
            })?;
        let n = p.tensor.len();
        let mut indices: Vec<usize> = (0..n).collect();
        if let (Coverage::PerTensor { samples, .. }, Some(rng)) = (coverage, &rng) {
            if samples < n {
                rng.stream(&p.name).shuffle(&mut indices);
                indices.truncate(samples);
                indices.sort_unstable();
            }
        }
        let mut scratch = params.clone();
        let start = &acts[from];
        let f = |values: &[f64]| {
            scratch.params[pi].tensor.data_mut().copy_from_slice(values);
            net.loss_from(&scratch, start.clone(), from, &labels, mode)
        };
        let report = grad_check_at(f, p.tensor.data(), lg.grads[pi].data(), &indices, eps)?;
        tensors.push(TensorCheck {
            name: p.name.clone(),
            report,
        });
    }
    Ok(ModelGradCheck {
        loss: lg.loss,
        tensors,
    })
}

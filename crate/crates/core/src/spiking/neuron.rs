use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NeuronKind {
    /// Integrate-and-fire with rate `max(0, u)`.
    SpikingRectifiedLinear,
    /// Leaky integrate-and-fire with a refractory period.
    Lif,
}

impl fmt::Display for NeuronKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NeuronKind::SpikingRectifiedLinear => "spiking_rectified_linear",
            NeuronKind::Lif => "lif",
        })
    }
}

impl FromStr for NeuronKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "spiking_rectified_linear" | "srl" | "if" => Ok(NeuronKind::SpikingRectifiedLinear),
            "lif" => Ok(NeuronKind::Lif),
            _ => Err(Error::Schema(format!("unknown neuron kind `{s}`"))),
        }
    }
}

/// Neuron dynamics plus the amplitude mapping activations to firing rates:
/// a unit with activation `x` is driven by `x / amplitude` and each spike
/// stands for `amplitude / dt` of activation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeuronModel {
    pub kind: NeuronKind,
    pub tau_rc: f64,
    pub tau_ref: f64,
    pub amplitude: f64,
}

impl NeuronModel {
    pub const DEFAULT_AMPLITUDE: f64 = 0.002;

    pub fn spiking_rectified_linear(amplitude: f64) -> Self {
        Self {
            kind: NeuronKind::SpikingRectifiedLinear,
            tau_rc: 0.02,
            tau_ref: 0.002,
            amplitude,
        }
    }

    pub fn lif(tau_rc: f64, tau_ref: f64, amplitude: f64) -> Self {
        Self {
            kind: NeuronKind::Lif,
            tau_rc,
            tau_ref,
            amplitude,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.amplitude > 0.0
            && self.amplitude.is_finite()
            && (self.kind != NeuronKind::Lif || (self.tau_rc > 0.0 && self.tau_ref > 0.0));
        if ok {
            Ok(())
        } else {
            Err(Error::Schema(format!("invalid neuron model {self:?}")))
        }
    }

    /// Steady-state rate (Hz) for a constant input current.
    pub fn rate(&self, u: f64) -> f64 {
        match self.kind {
            NeuronKind::SpikingRectifiedLinear => u.max(0.0),
            NeuronKind::Lif if u > 1.0 => {
                1.0 / (self.tau_ref + self.tau_rc * (1.0 / (u - 1.0)).ln_1p())
            }
            NeuronKind::Lif => 0.0,
        }
    }
}

impl Default for NeuronModel {
    fn default() -> Self {
        Self::spiking_rectified_linear(Self::DEFAULT_AMPLITUDE)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct NeuronState {
    pub voltage: f64,
    /// Seconds of refractory hold remaining.
    pub refractory: f64,
}

/// Advances one neuron by `dt` under input current `u`; at most one spike per step.
pub fn neuron_step(
    state: NeuronState,
    u: f64,
    model: &NeuronModel,
    dt: f64,
) -> (NeuronState, bool) {
    match model.kind {
        NeuronKind::SpikingRectifiedLinear => {
            let mut v = state.voltage + u.max(0.0) * dt;
            let spike = v >= 1.0;
            if spike {
                v -= 1.0;
            }
            (
                NeuronState {
                    voltage: v,
                    refractory: 0.0,
                },
                spike,
            )
        }
        NeuronKind::Lif => {
            if state.refractory > 0.0 {
                let left = (state.refractory - dt).max(0.0);
                return (
                    NeuronState {
                        voltage: 0.0,
                        refractory: left,
                    },
                    false,
                );
            }
            let v = u + (state.voltage - u) * (-dt / model.tau_rc).exp();
            if v >= 1.0 {
                (
                    NeuronState {
                        voltage: 0.0,
                        refractory: model.tau_ref,
                    },
                    true,
                )
            } else {
                (
                    NeuronState {
                        voltage: v.max(0.0),
                        refractory: 0.0,
                    },
                    false,
                )
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn count(u: f64, model: &NeuronModel, steps: usize, dt: f64) -> usize {
        let mut s = NeuronState::default();
        let mut n = 0;
        for _ in 0..steps {
            let (next, spike) = neuron_step(s, u, model, dt);
            assert!(next.refractory >= 0.0 && next.refractory <= model.tau_ref);
            s = next;
            n += spike as usize;
        }
        n
    }

    #[test]
    fn rectified_linear_counts() {
        let m = NeuronModel::spiking_rectified_linear(1.0);
        assert_eq!(count(-3.0, &m, 1000, 1e-3), 0);
        assert_eq!(count(0.0, &m, 1000, 1e-3), 0);
        assert!((count(50.0, &m, 1000, 1e-3) as i64 - 50).abs() <= 1);
    }

    #[test]
    fn rate_matching_within_quantization() {
        let m = NeuronModel::spiking_rectified_linear(1.0);
        let (steps, dt) = (1000, 1e-3);
        for u in [0.0, 0.5, 1.0, 5.0, 50.0] {
            let rate = count(u, &m, steps, dt) as f64 / (steps as f64 * dt);
            assert!(
                (rate - m.rate(u)).abs() <= 1.0 / (steps as f64 * dt) + 1e-12,
                "u={u}"
            );
        }
    }

    #[test]
    fn lif_subthreshold_silent_and_refractory_ceiling() {
        let m = NeuronModel::lif(0.02, 0.002, 1.0);
        assert_eq!(count(0.99, &m, 100_000, 1e-3), 0);
        let steps = 10_000;
        let n = count(1e6, &m, steps, 1e-4);
        let rate = n as f64 / (steps as f64 * 1e-4);
        assert!(rate <= 1.0 / m.tau_ref, "{rate}");
        assert!(rate > 0.0);
        // moderate drive roughly follows the analytic rate
        let n = count(3.0, &m, 100_000, 1e-5);
        let rate = n as f64 / 1.0;
        assert!(
            (rate - m.rate(3.0)).abs() / m.rate(3.0) < 0.05,
            "{rate} vs {}",
            m.rate(3.0)
        );
    }

    #[test]
    fn neuron_kind_parses() {
        assert_eq!("lif".parse::<NeuronKind>().unwrap(), NeuronKind::Lif);
        assert_eq!(
            "spiking_rectified_linear".parse::<NeuronKind>().unwrap(),
            NeuronKind::SpikingRectifiedLinear
        );
        assert!("relu".parse::<NeuronKind>().is_err());
    }
}

use serde::{Deserialize, Serialize};

use super::neuron::{neuron_step, NeuronModel, NeuronState};
use crate::encoding::EventWindow;
use crate::error::{Error, Result};
use crate::nets::{Act, Evaluation, ModelKind, ModelParams, ModelSpec, Network, Op, BN_EPSILON};
use crate::numcore::kernels::{gemm, softmax_rows};

/// Simulation settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub neuron: NeuronModel,
    pub dt: f64,
    pub steps: usize,
    /// Scale applied to the presented input current.
    pub input_gain: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            neuron: NeuronModel::default(),
            dt: 0.001,
            steps: 200,
            input_gain: 1.0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        self.neuron.validate()?;
        if !(self.dt > 0.0)
            || self.steps == 0
            || !(self.input_gain > 0.0)
            || !self.input_gain.is_finite()
        {
            return Err(Error::Schema(format!("invalid simulation config {self:?}")));
        }
        Ok(())
    }
}

/// Affine map feeding one population.
#[derive(Debug, Clone, PartialEq)]
pub enum Affine {
    /// `y = x·w + b`, `w` is `inp × out`.
    Dense {
        w: Vec<f64>,
        b: Vec<f64>,
        inp: usize,
        out: usize,
    },
    /// Same-padded temporal convolution over a `steps × inp` input; output `steps × out`.
    Conv {
        w: Vec<f64>,
        b: Vec<f64>,
        kernel: usize,
        inp: usize,
        out: usize,
        steps: usize,
    },
    /// Temporal mean of a `steps × inp` input followed by a dense map.
    PooledDense {
        w: Vec<f64>,
        b: Vec<f64>,
        inp: usize,
        out: usize,
        steps: usize,
    },
}

impl Affine {
    pub fn in_len(&self) -> usize {
        match self {
            Affine::Dense { inp, .. } => *inp,
            Affine::Conv { inp, steps, .. } | Affine::PooledDense { inp, steps, .. } => inp * steps,
        }
    }

    pub fn out_len(&self) -> usize {
        match self {
            Affine::Dense { out, .. } | Affine::PooledDense { out, .. } => *out,
            Affine::Conv { out, steps, .. } => out * steps,
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Affine::Dense { w, b, inp, out } => {
                let mut y = b.clone();
                gemm(x, w, &mut y, 1, *inp, *out);
                y
            }
            Affine::PooledDense {
                w,
                b,
                inp,
                out,
                steps,
            } => {
                let mut mean = vec![0.0; *inp];
                for row in x.chunks(*inp) {
                    for (m, v) in mean.iter_mut().zip(row) {
                        *m += v;
                    }
                }
                mean.iter_mut().for_each(|m| *m /= *steps as f64);
                let mut y = b.clone();
                gemm(&mean, w, &mut y, 1, *inp, *out);
                y
            }
            Affine::Conv {
                w,
                b,
                kernel,
                inp,
                out,
                steps,
            } => {
                let pad = (kernel - 1) / 2;
                let mut y = Vec::with_capacity(steps * out);
                for _ in 0..*steps {
                    y.extend_from_slice(b);
                }
                for t in 0..*steps {
                    let yr = &mut y[t * out..(t + 1) * out];
                    for j in 0..*kernel {
                        let src = t as isize + j as isize - pad as isize;
                        if src < 0 || src >= *steps as isize {
                            continue;
                        }
                        let src = src as usize;
                        gemm(
                            &x[src * inp..(src + 1) * inp],
                            &w[j * inp * out..(j + 1) * inp * out],
                            yr,
                            1,
                            *inp,
                            *out,
                        );
                    }
                }
                y
            }
        }
    }

    /// Number of synapses leaving input unit `j`.
    pub fn fan_out(&self, j: usize) -> usize {
        match self {
            Affine::Dense { out, .. } | Affine::PooledDense { out, .. } => *out,
            Affine::Conv {
                kernel,
                inp,
                out,
                steps,
                ..
            } => {
                let t = (j / inp) as isize;
                let pad = ((kernel - 1) / 2) as isize;
                let lo = (t - pad).max(0);
                let hi = (t + pad).min(*steps as isize - 1);
                (hi - lo + 1) as usize * out
            }
        }
    }

    fn bias(&self) -> &[f64] {
        match self {
            Affine::Dense { b, .. } | Affine::Conv { b, .. } | Affine::PooledDense { b, .. } => b,
        }
    }
}

/// One converted layer: an affine map and the population (or readout) it drives.
#[derive(Debug, Clone, PartialEq)]
pub struct SpikingLayer {
    pub name: String,
    pub affine: Affine,
}

/// What produces the input presented to the first spiking population.
#[derive(Debug, Clone)]
pub enum Front {
    /// The flattened window itself.
    Window,
    /// Source-network ops `[0, upto)` evaluated in rate mode.
    Recurrent { upto: usize },
}

/// A network converted for spiking simulation.
#[derive(Debug, Clone)]
pub struct SpikingNetwork {
    pub spec: ModelSpec,
    pub source: ModelParams,
    pub front: Front,
    /// Spiking populations in order; the first is driven by the front output.
    pub layers: Vec<SpikingLayer>,
    /// Non-spiking output layer read as a time average.
    pub readout: SpikingLayer,
    pub config: SimConfig,
    net: Network,
}

/// Outcome of simulating one window.
#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
    pub spikes_per_layer: Vec<u64>,
    /// Spikes times fan-out, plus input presentations times fan-out.
    pub synaptic_events: u64,
}

/// Per-step spike counts, one row per (step, layer).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SimTrace {
    pub rows: Vec<(usize, usize, u64)>,
}

impl SimTrace {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("step,layer,spikes\n");
        for (step, layer, n) in &self.rows {
            s.push_str(&format!("{step},{layer},{n}\n"));
        }
        s
    }
}

fn fold(w: &[f64], b: Option<&[f64]>, out: usize, bn: Option<[&[f64]; 4]>) -> (Vec<f64>, Vec<f64>) {
    let mut w = w.to_vec();
    let mut bias = b.map_or_else(|| vec![0.0; out], <[f64]>::to_vec);
    if let Some([gamma, beta, mean, var]) = bn {
        let scale: Vec<f64> = (0..out)
            .map(|o| gamma[o] / (var[o] + BN_EPSILON).sqrt())
            .collect();
        for row in w.chunks_mut(out) {
            for (v, s) in row.iter_mut().zip(&scale) {
                *v *= s;
            }
        }
        for o in 0..out {
            bias[o] = (bias[o] - mean[o]) * scale[o] + beta[o];
        }
    }
    (w, bias)
}

/// Folds batch norm into the preceding affine maps, drops dropout and
/// replaces each ReLU by a spiking population. Recurrent layers stay in rate
/// mode when `allow_hybrid` is set and are rejected otherwise.
pub fn convert_with(
    spec: &ModelSpec,
    params: &ModelParams,
    config: SimConfig,
    allow_hybrid: bool,
) -> Result<SpikingNetwork> {
    config.validate()?;
    let net = Network::new(spec)?;
    net.check_params(params)?;
    let ops = &net.ops;
    let mut start = 0;
    let mut front = Front::Window;
    if spec.kind == ModelKind::Lstm {
        let upto = ops
            .iter()
            .position(|op| matches!(op, Op::Dense { .. }))
            .expect("dense tail");
        if !allow_hybrid {
            let layer = ops[..upto]
                .iter()
                .find_map(|op| match op {
                    Op::BiLstm { name, .. } => Some(name.clone()),
                    _ => None,
                })
                .unwrap_or_default();
            return Err(Error::Conversion {
                layer,
                reason: "is recurrent and has no spiking equivalent; use hybrid conversion".into(),
            });
        }
        front = Front::Recurrent { upto };
        start = upto;
    }

    let mut layers = Vec::new();
    let mut pooled_steps: Option<usize> = None;
    let mut i = start;
    let mut readout = None;
    while i < ops.len() {
        match &ops[i] {
            Op::Flatten | Op::Dropout { .. } => i += 1,
            Op::TemporalMean => {
                pooled_steps = Some(spec.window_length);
                i += 1;
            }
            Op::Dense {
                name,
                w,
                b,
                inp,
                out,
            }
            | Op::Conv1d {
                name,
                w,
                b,
                inp,
                out,
                ..
            } => {
                let bn = match ops.get(i + 1) {
                    Some(Op::BatchNorm {
                        gamma,
                        beta,
                        mean,
                        var,
                    }) => Some([
                        params.data(*gamma),
                        params.data(*beta),
                        params.data(*mean),
                        params.data(*var),
                    ]),
                    _ => None,
                };
                let (wf, bf) = fold(params.data(*w), (*b).map(|b| params.data(b)), *out, bn);
                let affine = match (&ops[i], pooled_steps.take()) {
                    (Op::Conv1d { kernel, .. }, _) => Affine::Conv {
                        w: wf,
                        b: bf,
                        kernel: *kernel,
                        inp: *inp,
                        out: *out,
                        steps: spec.window_length,
                    },
                    (_, Some(steps)) => Affine::PooledDense {
                        w: wf,
                        b: bf,
                        inp: *inp,
                        out: *out,
                        steps,
                    },
                    _ => Affine::Dense {
                        w: wf,
                        b: bf,
                        inp: *inp,
                        out: *out,
                    },
                };
                i += 1 + bn.is_some() as usize;
                let layer = SpikingLayer {
                    name: name.clone(),
                    affine,
                };
                match ops.get(i) {
                    Some(Op::Relu) => {
                        layers.push(layer);
                        i += 1;
                    }
                    None => {
                        readout = Some(layer);
                    }
                    Some(other) => {
                        return Err(Error::Conversion {
                            layer: name.clone(),
                            reason: format!("is followed by unsupported {other:?}"),
                        })
                    }
                }
            }
            other => {
                return Err(Error::Conversion {
                    layer: format!("{other:?}"),
                    reason: "cannot be converted".into(),
                })
            }
        }
    }
    Ok(SpikingNetwork {
        spec: spec.clone(),
        source: params.clone(),
        front,
        layers,
        readout: readout.expect("output layer"),
        config,
        net,
    })
}

/// Hybrid-enabled conversion with the given simulation settings.
pub fn convert(
    spec: &ModelSpec,
    params: &ModelParams,
    config: SimConfig,
) -> Result<SpikingNetwork> {
    convert_with(spec, params, config, true)
}

impl SpikingNetwork {
    /// Presented input for each window: the scaled flattened window, or the
    /// recurrent front's output.
    pub fn present(&self, windows: &[&EventWindow]) -> Result<Vec<Vec<f64>>> {
        let x = self.net.input(windows)?;
        let gain = self.config.input_gain;
        let scaled = Act::new(
            x.batch,
            x.steps,
            x.width,
            x.data.iter().map(|v| v * gain).collect(),
        );
        let out = match self.front {
            Front::Window => scaled,
            Front::Recurrent { upto } => self.net.run_prefix(&self.source, scaled, upto),
        };
        let per = out.data.len() / out.batch;
        Ok(out.data.chunks(per).map(<[f64]>::to_vec).collect())
    }

    /// Rate-mode logits of the folded network (ReLU in place of spiking units).
    pub fn rate_logits(&self, input: &[f64]) -> Vec<f64> {
        let mut x = input.to_vec();
        for l in &self.layers {
            x = l.affine.apply(&x);
            x.iter_mut().for_each(|v| *v = v.max(0.0));
        }
        self.readout.affine.apply(&x)
    }

    pub fn simulate(&self, window: &EventWindow) -> Result<SimOutput> {
        let input = self.present(&[window])?.remove(0);
        Ok(self.simulate_input(&input, None))
    }

    pub fn simulate_traced(&self, window: &EventWindow) -> Result<(SimOutput, SimTrace)> {
        let input = self.present(&[window])?.remove(0);
        let mut trace = SimTrace::default();
        let out = self.simulate_input(&input, Some(&mut trace));
        Ok((out, trace))
    }

    /// Steps every population together for `config.steps` steps. Population
    /// `l > 0` is driven by the running spike-count rate estimate of `l − 1`.
    pub fn simulate_input(&self, input: &[f64], mut trace: Option<&mut SimTrace>) -> SimOutput {
        let SimConfig {
            neuron, dt, steps, ..
        } = self.config;
        let amp = neuron.amplitude;
        let n_layers = self.layers.len();
        let drive0: Vec<f64> = self.layers[0]
            .affine
            .apply(input)
            .iter()
            .map(|z| z / amp)
            .collect();
        let mut states: Vec<Vec<NeuronState>> = self
            .layers
            .iter()
            .map(|l| vec![NeuronState::default(); l.affine.out_len()])
            .collect();
        let mut counts: Vec<Vec<f64>> = states.iter().map(|s| vec![0.0; s.len()]).collect();
        let mut spikes_per_layer = vec![0u64; n_layers];
        let input_events: u64 = input
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(j, _)| self.layers[0].affine.fan_out(j) as u64)
            .sum();
        let mut synaptic_events = input_events * steps as u64;
        let mut rate = Vec::new();
        let mut drive = Vec::new();

        for step in 1..=steps {
            let elapsed = step as f64 * dt;
            for l in 0..n_layers {
                let drive: &[f64] = if l == 0 {
                    &drive0
                } else {
                    rate.clear();
                    rate.extend(counts[l - 1].iter().map(|c| c * amp / elapsed));
                    drive.clear();
                    drive.extend(self.layers[l].affine.apply(&rate).iter().map(|v| v / amp));
                    &drive
                };
                let next = self.layers.get(l + 1).map_or(&self.readout, |x| x);
                let mut fired = 0u64;
                for (j, (s, u)) in states[l].iter_mut().zip(drive).enumerate() {
                    let (ns, spike) = neuron_step(*s, *u, &neuron, dt);
                    *s = ns;
                    if spike {
                        counts[l][j] += 1.0;
                        fired += 1;
                        synaptic_events += next.affine.fan_out(j) as u64;
                    }
                }
                spikes_per_layer[l] += fired;
                if let Some(t) = trace.as_deref_mut() {
                    t.rows.push((step, l, fired));
                }
            }
        }
        let total = steps as f64 * dt;
        let last: Vec<f64> = counts[n_layers - 1]
            .iter()
            .map(|c| c * amp / total)
            .collect();
        let logits = self.readout.affine.apply(&last);
        let mut probs = logits.clone();
        softmax_rows(&mut probs, logits.len());
        SimOutput {
            logits,
            probs,
            spikes_per_layer,
            synaptic_events,
        }
    }

    /// Simulates a fresh copy of `self` with a different configuration.
    pub fn with_config(&self, config: SimConfig) -> Result<Self> {
        config.validate()?;
        let mut s = self.clone();
        s.config = config;
        Ok(s)
    }
}

/// SNN accuracy with the same metric as the rate network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnnEvaluation {
    pub evaluation: Evaluation,
    pub mean_synaptic_events: f64,
    pub mean_spikes: f64,
}

pub fn evaluate_snn(snn: &SpikingNetwork, windows: &[EventWindow]) -> Result<SnnEvaluation> {
    if windows.is_empty() {
        return Err(Error::Input("nothing to evaluate".into()));
    }
    let mut predictions = Vec::with_capacity(windows.len());
    let (mut events, mut spikes) = (0u64, 0u64);
    for chunk in windows.chunks(256) {
        let refs: Vec<&EventWindow> = chunk.iter().collect();
        for input in snn.present(&refs)? {
            let out = snn.simulate_input(&input, None);
            predictions.push(crate::numcore::kernels::argmax(&out.probs));
            events += out.synaptic_events;
            spikes += out.spikes_per_layer.iter().sum::<u64>();
        }
    }
    let labels = windows.iter().map(|w| w.label(snn.spec.target)).collect();
    let n = windows.len() as f64;
    Ok(SnnEvaluation {
        evaluation: crate::nets::score(windows, predictions, labels, snn.spec.num_classes),
        mean_synaptic_events: events as f64 / n,
        mean_spikes: spikes as f64 / n,
    })
}

impl SpikingLayer {
    pub fn bias(&self) -> &[f64] {
        self.affine.bias()
    }
}

use super::act::Act;
use super::layers::{BnStats, Cache, LstmIdx, Mode, Op, BN_MOMENTUM};
use super::params::{Init, ModelParams, Param, ParamSpec};
use super::spec::{ModelKind, ModelSpec, EMBEDDING_DIM};
use crate::encoding::EventWindow;
use crate::error::{Error, Result};
use crate::numcore::kernels::softmax_rows;
use crate::numcore::{Rng, Tensor};
use crate::schema::NUM_FEATURES;

/// A model spec compiled into a layer pipeline with parameter slots.
#[derive(Debug, Clone)]
pub struct Network {
    spec: ModelSpec,
    pub(crate) ops: Vec<Op>,
    pub(crate) param_specs: Vec<ParamSpec>,
    /// Index of the op whose output is the 16-unit embedding.
    pub(crate) embed_op: usize,
}

/// Result of a forward pass, row-major per window.
#[derive(Debug, Clone)]
pub struct ForwardOutput {
    pub num_classes: usize,
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
    pub embedding: Vec<f64>,
}

impl ForwardOutput {
    pub fn len(&self) -> usize {
        self.probs.len() / self.num_classes
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn prob_row(&self, i: usize) -> &[f64] {
        &self.probs[i * self.num_classes..(i + 1) * self.num_classes]
    }

    pub fn embedding_row(&self, i: usize) -> &[f64] {
        &self.embedding[i * EMBEDDING_DIM..(i + 1) * EMBEDDING_DIM]
    }

    pub fn predictions(&self) -> Vec<usize> {
        (0..self.len())
            .map(|i| crate::numcore::kernels::argmax(self.prob_row(i)))
            .collect()
    }
}

/// Loss, gradients aligned with `ModelParams::params`, and the batch-norm
/// statistics a training step should fold into the running averages.
#[derive(Debug, Clone)]
pub struct LossGrads {
    pub loss: f64,
    pub grads: Vec<Tensor>,
    pub correct: usize,
    pub bn_stats: Vec<BnStats>,
}

struct Builder {
    ops: Vec<Op>,
    specs: Vec<ParamSpec>,
}

impl Builder {
    fn param(&mut self, name: String, shape: Vec<usize>, init: Init, trainable: bool) -> usize {
        self.specs.push(ParamSpec {
            name,
            shape,
            init,
            trainable,
        });
        self.specs.len() - 1
    }

    fn dense(
        &mut self,
        name: &str,
        inp: usize,
        out: usize,
        bias: bool,
        limit: f64,
        keys: Option<Vec<String>>,
    ) {
        let w = self.param(
            format!("{name}.w"),
            vec![inp, out],
            Init::Uniform {
                limit,
                row_keys: keys,
            },
            true,
        );
        let b = bias.then(|| self.param(format!("{name}.b"), vec![out], Init::Zeros, true));
        self.ops.push(Op::Dense {
            name: name.to_string(),
            w,
            b,
            inp,
            out,
        });
    }

    fn norm_act(&mut self, name: &str, width: usize, batchnorm: bool, dropout: f64) {
        if batchnorm {
            let gamma = self.param(format!("{name}.gamma"), vec![width], Init::Ones, true);
            let beta = self.param(format!("{name}.beta"), vec![width], Init::Zeros, true);
            let mean = self.param(format!("{name}.mean"), vec![width], Init::Zeros, false);
            let var = self.param(format!("{name}.var"), vec![width], Init::Ones, false);
            self.ops.push(Op::BatchNorm {
                gamma,
                beta,
                mean,
                var,
            });
        }
        self.ops.push(Op::Relu);
        self.ops.push(Op::Dropout { rate: dropout });
    }

    fn lstm_dir(
        &mut self,
        name: &str,
        inp: usize,
        hidden: usize,
        keys: Option<Vec<String>>,
    ) -> LstmIdx {
        let limit = 1.0 / (hidden as f64).sqrt();
        let wx = self.param(
            format!("{name}.wx"),
            vec![inp, 4 * hidden],
            Init::Uniform {
                limit,
                row_keys: keys,
            },
            true,
        );
        let wh = self.param(
            format!("{name}.wh"),
            vec![hidden, 4 * hidden],
            Init::Uniform {
                limit,
                row_keys: None,
            },
            true,
        );
        let b = self.param(
            format!("{name}.b"),
            vec![4 * hidden],
            Init::ForgetBias { hidden },
            true,
        );
        LstmIdx { wx, wh, b }
    }

    fn bilstm(
        &mut self,
        name: &str,
        inp: usize,
        hidden: usize,
        seq: bool,
        keys: Option<Vec<String>>,
    ) {
        let fwd = self.lstm_dir(&format!("{name}.fwd"), inp, hidden, keys.clone());
        let bwd = self.lstm_dir(&format!("{name}.bwd"), inp, hidden, keys);
        self.ops.push(Op::BiLstm {
            name: name.to_string(),
            fwd,
            bwd,
            hidden,
            return_sequences: seq,
        });
    }
}

fn he_limit(fan_in: usize) -> f64 {
    (6.0 / fan_in as f64).sqrt()
}

impl Network {
    pub fn new(spec: &ModelSpec) -> Result<Self> {
        spec.validate()?;
        let (feat, steps, drop, bn) = (
            spec.input_width(),
            spec.window_length,
            spec.dropout_rate,
            spec.batchnorm,
        );
        let names = &spec.input_features;
        let sizes = &spec.layer_sizes;
        // init scale of input-facing layers uses the full schema width
        let schema_width = feat.max(NUM_FEATURES);
        let mut b = Builder {
            ops: Vec::new(),
            specs: Vec::new(),
        };
        // widths of the dense tail, starting from the front-end output
        let (tail_in, tail): (usize, &[usize]) = match spec.kind {
            ModelKind::Lstm => {
                b.bilstm("lstm1", feat, sizes[0] / 2, true, Some(names.clone()));
                b.ops.push(Op::Dropout { rate: drop });
                b.bilstm("lstm2", sizes[0], sizes[1] / 2, false, None);
                b.ops.push(Op::Dropout { rate: drop });
                (sizes[1], &sizes[2..])
            }
            ModelKind::Cnn => {
                let k = spec.kernel_width;
                let keys = (0..k)
                    .flat_map(|j| names.iter().map(move |n| format!("k{j}/{n}")))
                    .collect::<Vec<_>>();
                let w = b.param(
                    "conv.w".into(),
                    vec![k * feat, sizes[0]],
                    Init::Uniform {
                        limit: he_limit(k * schema_width),
                        row_keys: Some(keys),
                    },
                    true,
                );
                let bias =
                    (!bn).then(|| b.param("conv.b".into(), vec![sizes[0]], Init::Zeros, true));
                b.ops.push(Op::Conv1d {
                    name: "conv".into(),
                    w,
                    b: bias,
                    kernel: k,
                    inp: feat,
                    out: sizes[0],
                });
                b.norm_act("conv.bn", sizes[0], bn, drop);
                b.ops.push(Op::TemporalMean);
                (sizes[0], &sizes[1..])
            }
            ModelKind::Fcn => {
                b.ops.push(Op::Flatten);
                (steps * feat, &sizes[..])
            }
        };
        let mut inp = tail_in;
        for (i, &out) in tail.iter().enumerate() {
            let name = format!("dense{}", i + 1);
            let keys = (spec.kind == ModelKind::Fcn && i == 0).then(|| {
                (0..steps)
                    .flat_map(|t| names.iter().map(move |n| format!("t{t}/{n}")))
                    .collect()
            });
            let fan_in = if keys.is_some() {
                steps * schema_width
            } else {
                inp
            };
            b.dense(&name, inp, out, !bn, he_limit(fan_in), keys);
            b.norm_act(&format!("{name}.bn"), out, bn, drop);
            inp = out;
        }
        // the ReLU right before the last dropout yields the embedding
        let embed_op = b.ops.len() - 2;
        b.dense(
            "out",
            inp,
            spec.num_classes,
            true,
            (3.0 / inp as f64).sqrt(),
            None,
        );
        Ok(Self {
            spec: spec.clone(),
            ops: b.ops,
            param_specs: b.specs,
            embed_op,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    /// Freshly initialized parameters; rows of input-facing weights are drawn
    /// from streams keyed by feature name.
    pub fn init(&self, seed: u64) -> ModelParams {
        let root = Rng::new(seed);
        ModelParams {
            params: self
                .param_specs
                .iter()
                .map(|s| Param {
                    name: s.name.clone(),
                    tensor: s.materialize(&root),
                    trainable: s.trainable,
                })
                .collect(),
        }
    }

    pub fn check_params(&self, params: &ModelParams) -> Result<()> {
        if params.params.len() != self.param_specs.len() {
            return Err(Error::Schema(format!(
                "expected {} parameter tensors, found {}",
                self.param_specs.len(),
                params.params.len()
            )));
        }
        for (s, p) in self.param_specs.iter().zip(&params.params) {
            s.check(p)?;
        }
        Ok(())
    }

    /// Stacks windows into a `batch × length × width` block.
    pub fn input(&self, windows: &[&EventWindow]) -> Result<Act> {
        if windows.is_empty() {
            return Err(Error::Input("empty batch".into()));
        }
        let (len, width) = (self.spec.window_length, self.spec.input_width());
        let mut data = Vec::with_capacity(windows.len() * len * width);
        for w in windows {
            if w.length != len || w.width != width || w.x.len() != len * width {
                return Err(Error::Schema(format!(
                    "window {}@{} is {}x{}, model expects {len}x{width}",
                    w.log_id, w.start, w.length, w.width
                )));
            }
            data.extend_from_slice(&w.x);
        }
        Ok(Act::new(windows.len(), len, width, data))
    }

    fn run(
        &self,
        params: &ModelParams,
        x: Act,
        mode: Mode,
    ) -> (Vec<Act>, Vec<Cache>, Vec<BnStats>) {
        let mut acts = Vec::with_capacity(self.ops.len() + 1);
        let mut caches = Vec::with_capacity(self.ops.len());
        let mut bn = Vec::new();
        acts.push(x);
        for (i, op) in self.ops.iter().enumerate() {
            let (y, c) = op.forward(params, acts.last().unwrap(), mode, i, &mut bn);
            acts.push(y);
            caches.push(c);
        }
        (acts, caches, bn)
    }

    pub fn forward_act(&self, params: &ModelParams, x: Act, mode: Mode) -> ForwardOutput {
        let (acts, _, _) = self.run(params, x, mode);
        let c = self.spec.num_classes;
        let logits = acts.last().unwrap().data.clone();
        let mut probs = logits.clone();
        softmax_rows(&mut probs, c);
        ForwardOutput {
            num_classes: c,
            logits,
            probs,
            embedding: acts[self.embed_op + 1].data.clone(),
        }
    }

    /// Inputs to every op (index `i` feeds op `i`) followed by the logits.
    pub(crate) fn activations(&self, params: &ModelParams, x: Act, mode: Mode) -> Vec<Act> {
        self.run(params, x, mode).0
    }

    /// Mean cross-entropy of running ops `from..` on `x`, the input of op `from`.
    pub(crate) fn loss_from(
        &self,
        params: &ModelParams,
        mut x: Act,
        from: usize,
        labels: &[usize],
        mode: Mode,
    ) -> f64 {
        for (i, op) in self.ops.iter().enumerate().skip(from) {
            x = op.forward(params, &x, mode, i, &mut Vec::new()).0;
        }
        let c = self.spec.num_classes;
        let mut probs = x.data;
        softmax_rows(&mut probs, c);
        let loss: f64 = labels
            .iter()
            .enumerate()
            .map(|(i, &l)| -probs[i * c + l].max(f64::MIN_POSITIVE).ln())
            .sum();
        loss / labels.len() as f64
    }

    /// Eval-mode output of the first `upto` ops.
    pub(crate) fn run_prefix(&self, params: &ModelParams, mut x: Act, upto: usize) -> Act {
        for (i, op) in self.ops[..upto].iter().enumerate() {
            x = op.forward(params, &x, Mode::Eval, i, &mut Vec::new()).0;
        }
        x
    }

    pub fn forward(
        &self,
        params: &ModelParams,
        windows: &[&EventWindow],
        mode: Mode,
    ) -> Result<ForwardOutput> {
        let x = self.input(windows)?;
        Ok(self.forward_act(params, x, mode))
    }

    /// Mean cross-entropy over the batch and its gradient for every parameter.
    pub fn loss_and_grads_act(
        &self,
        params: &ModelParams,
        x: Act,
        labels: &[usize],
        mode: Mode,
    ) -> Result<LossGrads> {
        let c = self.spec.num_classes;
        if labels.len() != x.batch {
            return Err(Error::Input(format!(
                "{} labels for a batch of {}",
                labels.len(),
                x.batch
            )));
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= c) {
            return Err(Error::Input(format!(
                "label {l} out of range for {c} classes"
            )));
        }
        let (acts, caches, bn_stats) = self.run(params, x, mode);
        let n = labels.len() as f64;
        let mut probs = acts.last().unwrap().data.clone();
        softmax_rows(&mut probs, c);
        let mut loss = 0.0;
        let mut correct = 0;
        let mut dlogits = probs.clone();
        for (i, &l) in labels.iter().enumerate() {
            let row = &probs[i * c..(i + 1) * c];
            loss -= row[l].max(f64::MIN_POSITIVE).ln();
            if crate::numcore::kernels::argmax(row) == l {
                correct += 1;
            }
            let d = &mut dlogits[i * c..(i + 1) * c];
            d[l] -= 1.0;
            d.iter_mut().for_each(|v| *v /= n);
        }
        loss /= n;
        let mut grads: Vec<Tensor> = params
            .params
            .iter()
            .map(|p| Tensor::zeros(p.tensor.shape()))
            .collect();
        let last = acts.last().unwrap();
        let mut dy = Act::new(last.batch, last.steps, last.width, dlogits);
        for i in (0..self.ops.len()).rev() {
            dy = self.ops[i].backward(
                params,
                &acts[i],
                &acts[i + 1],
                &caches[i],
                &dy,
                mode,
                &mut grads,
            );
        }
        Ok(LossGrads {
            loss,
            grads,
            correct,
            bn_stats,
        })
    }

    pub fn loss_and_grads(
        &self,
        params: &ModelParams,
        windows: &[&EventWindow],
        mode: Mode,
    ) -> Result<LossGrads> {
        let x = self.input(windows)?;
        let labels: Vec<usize> = windows.iter().map(|w| w.label(self.spec.target)).collect();
        self.loss_and_grads_act(params, x, &labels, mode)
    }
}

/// Moves running batch-norm statistics toward the observed batch values.
pub fn update_running_stats(params: &mut ModelParams, stats: &[BnStats]) {
    for s in stats {
        for (idx, obs) in [(s.mean_param, &s.mean), (s.var_param, &s.var)] {
            for (r, o) in params.params[idx].tensor.data_mut().iter_mut().zip(obs) {
                *r = BN_MOMENTUM * *r + (1.0 - BN_MOMENTUM) * o;
            }
        }
    }
}

/// Compiles `spec` and initializes its parameters.
pub fn build(spec: &ModelSpec, seed: u64) -> Result<ModelParams> {
    Ok(Network::new(spec)?.init(seed))
}

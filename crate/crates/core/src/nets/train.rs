use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::layers::Mode;
use super::model::{update_running_stats, Network};
use super::params::ModelParams;
use super::spec::{ModelSpec, TrainConfig, TrainHistory};
use crate::encoding::{DatasetSplit, EventWindow};
use crate::error::{Error, Result};
use crate::numcore::kernels::argmax;
use crate::numcore::Rng;

const EVAL_CHUNK: usize = 256;

/// Adam state for every trainable tensor.
struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
}

impl Adam {
    fn new(params: &ModelParams) -> Self {
        let zeros = || {
            params
                .params
                .iter()
                .map(|p| vec![0.0; p.tensor.len()])
                .collect()
        };
        Self {
            m: zeros(),
            v: zeros(),
            t: 0,
        }
    }

    fn step(
        &mut self,
        params: &mut ModelParams,
        grads: &[crate::numcore::Tensor],
        cfg: &TrainConfig,
    ) {
        self.t += 1;
        let c1 = 1.0 - cfg.beta1.powi(self.t);
        let c2 = 1.0 - cfg.beta2.powi(self.t);
        for (i, p) in params.params.iter_mut().enumerate() {
            if !p.trainable {
                continue;
            }
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for (j, (w, g)) in p
                .tensor
                .data_mut()
                .iter_mut()
                .zip(grads[i].data())
                .enumerate()
            {
                m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g;
                v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g * g;
                *w -= cfg.learning_rate * (m[j] / c1) / ((v[j] / c2).sqrt() + cfg.epsilon);
            }
        }
    }
}

/// Trains from a fresh initialization and returns the parameters of the
/// epoch with the best test accuracy.
pub fn train(
    spec: &ModelSpec,
    split: &DatasetSplit,
    cfg: &TrainConfig,
) -> Result<(ModelParams, TrainHistory)> {
    train_with(spec, split, cfg, |_, _| {})
}

/// As [`train`], reporting `(epoch, history)` after every epoch.
pub fn train_with(
    spec: &ModelSpec,
    split: &DatasetSplit,
    cfg: &TrainConfig,
    mut progress: impl FnMut(usize, &TrainHistory),
) -> Result<(ModelParams, TrainHistory)> {
    cfg.validate()?;
    if split.train.is_empty() || split.test.is_empty() {
        return Err(Error::Input(
            "training needs nonempty train and test sets".into(),
        ));
    }
    let net = Network::new(spec)?;
    let mut params = net.init(cfg.seed);
    let mut adam = Adam::new(&params);
    let mut history = TrainHistory::default();
    let mut best: Option<(f64, ModelParams)> = None;
    let mut since_best = 0;
    let mut order: Vec<usize> = (0..split.train.len()).collect();

    for epoch in 0..cfg.max_epochs {
        let mut rng = Rng::new(Rng::derive_seed(cfg.seed, &format!("shuffle/{epoch}")));
        rng.shuffle(&mut order);
        let mut batches: Vec<&[usize]> = order
            .chunks(cfg.batch_size)
            .filter(|b| b.len() >= 2)
            .collect();
        if cfg.batches_per_epoch > 0 {
            batches.truncate(cfg.batches_per_epoch);
        }
        let (mut loss_sum, mut correct, mut seen) = (0.0, 0, 0);
        for (step, idx) in batches.iter().enumerate() {
            let windows: Vec<&EventWindow> = idx.iter().map(|&i| &split.train[i]).collect();
            let mode = Mode::Train {
                dropout_seed: Rng::derive_seed(cfg.seed, &format!("dropout/{epoch}/{step}")),
            };
            let lg = net.loss_and_grads(&params, &windows, mode)?;
            if !lg.loss.is_finite() {
                return Err(Error::Training {
                    epoch: epoch + 1,
                    reason: format!("non-finite loss at step {}", step + 1),
                });
            }
            adam.step(&mut params, &lg.grads, cfg);
            update_running_stats(&mut params, &lg.bn_stats);
            if !params.is_finite() {
                return Err(Error::Training {
                    epoch: epoch + 1,
                    reason: format!("non-finite parameters after step {}", step + 1),
                });
            }
            loss_sum += lg.loss * windows.len() as f64;
            correct += lg.correct;
            seen += windows.len();
        }
        let test = evaluate_with(&net, &params, &split.test)?;
        history.train_loss.push(loss_sum / seen.max(1) as f64);
        history
            .train_accuracy
            .push(correct as f64 / seen.max(1) as f64);
        history.test_accuracy.push(test.accuracy);
        log::info!(
            "epoch {} loss {:.4} train {:.4} test {:.4}",
            epoch + 1,
            loss_sum / seen.max(1) as f64,
            correct as f64 / seen.max(1) as f64,
            test.accuracy
        );
        progress(epoch + 1, &history);
        if best.as_ref().map_or(true, |(a, _)| test.accuracy > *a) {
            best = Some((test.accuracy, params.clone()));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
    }
    Ok((best.expect("at least one epoch").1, history))
}

/// Accuracy and predictions over a window set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    pub predictions: Vec<usize>,
    pub labels: Vec<usize>,
    /// Majority vote over each source exercise's windows (ties to the lowest class).
    pub exercise_accuracy: f64,
}

pub fn evaluate(
    spec: &ModelSpec,
    params: &ModelParams,
    windows: &[EventWindow],
) -> Result<Evaluation> {
    let net = Network::new(spec)?;
    net.check_params(params)?;
    evaluate_with(&net, params, windows)
}

pub fn evaluate_with(
    net: &Network,
    params: &ModelParams,
    windows: &[EventWindow],
) -> Result<Evaluation> {
    if windows.is_empty() {
        return Err(Error::Input("nothing to evaluate".into()));
    }
    let mut predictions = Vec::with_capacity(windows.len());
    for chunk in windows.chunks(EVAL_CHUNK) {
        let refs: Vec<&EventWindow> = chunk.iter().collect();
        predictions.extend(net.forward(params, &refs, Mode::Eval)?.predictions());
    }
    let target = net.spec().target;
    let labels: Vec<usize> = windows.iter().map(|w| w.label(target)).collect();
    Ok(score(windows, predictions, labels, net.spec().num_classes))
}

/// Builds an [`Evaluation`] from externally produced predictions.
pub fn score(
    windows: &[EventWindow],
    predictions: Vec<usize>,
    labels: Vec<usize>,
    num_classes: usize,
) -> Evaluation {
    let correct = predictions
        .iter()
        .zip(&labels)
        .filter(|(p, l)| p == l)
        .count();
    let mut votes: BTreeMap<&str, (usize, Vec<f64>)> = BTreeMap::new();
    for ((w, &p), &l) in windows.iter().zip(&predictions).zip(&labels) {
        let e = votes
            .entry(w.log_id.as_str())
            .or_insert_with(|| (l, vec![0.0; num_classes]));
        e.1[p] += 1.0;
    }
    let hits = votes.values().filter(|(l, v)| argmax(v) == *l).count();
    Evaluation {
        accuracy: correct as f64 / labels.len() as f64,
        predictions,
        labels,
        exercise_accuracy: hits as f64 / votes.len() as f64,
    }
}

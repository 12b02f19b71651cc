//! Layer operations with analytic backward passes.

use super::act::Act;
use super::lstm::{self, LstmGrads, LstmTrace};
use super::params::ModelParams;
use crate::numcore::kernels::{gemm, gemm_nt, gemm_tn};
use crate::numcore::{Rng, Tensor};

pub const BN_EPSILON: f64 = 1e-3;
pub const BN_MOMENTUM: f64 = 0.99;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Eval,
    /// Batch statistics and dropout; masks derive from `dropout_seed`.
    Train {
        dropout_seed: u64,
    },
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct LstmIdx {
    pub wx: usize,
    pub wh: usize,
    pub b: usize,
}

#[derive(Debug, Clone)]
pub(crate) enum Op {
    Dense {
        name: String,
        w: usize,
        b: Option<usize>,
        inp: usize,
        out: usize,
    },
    BatchNorm {
        gamma: usize,
        beta: usize,
        mean: usize,
        var: usize,
    },
    Relu,
    Dropout {
        rate: f64,
    },
    Conv1d {
        name: String,
        w: usize,
        b: Option<usize>,
        kernel: usize,
        inp: usize,
        out: usize,
    },
    TemporalMean,
    Flatten,
    BiLstm {
        name: String,
        fwd: LstmIdx,
        bwd: LstmIdx,
        hidden: usize,
        return_sequences: bool,
    },
}

impl Op {
    /// Parameter indices this op reads.
    pub(crate) fn param_indices(&self) -> Vec<usize> {
        match self {
            Op::Dense { w, b, .. } | Op::Conv1d { w, b, .. } => {
                std::iter::once(*w).chain(*b).collect()
            }
            Op::BatchNorm {
                gamma,
                beta,
                mean,
                var,
            } => vec![*gamma, *beta, *mean, *var],
            Op::BiLstm { fwd, bwd, .. } => vec![fwd.wx, fwd.wh, fwd.b, bwd.wx, bwd.wh, bwd.b],
            Op::Relu | Op::Dropout { .. } | Op::TemporalMean | Op::Flatten => Vec::new(),
        }
    }
}

pub(crate) enum Cache {
    None,
    BatchNorm { xhat: Vec<f64>, inv_std: Vec<f64> },
    Dropout { mask: Vec<f64> },
    BiLstm { fwd: LstmTrace, bwd: LstmTrace },
}

/// Batch statistics observed by a train-mode batch-norm layer.
#[derive(Debug, Clone)]
pub struct BnStats {
    pub mean_param: usize,
    pub var_param: usize,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl Op {
    pub fn forward(
        &self,
        params: &ModelParams,
        x: &Act,
        mode: Mode,
        op_index: usize,
        bn: &mut Vec<BnStats>,
    ) -> (Act, Cache) {
        match self {
            Op::Dense { w, b, inp, out, .. } => {
                debug_assert_eq!(x.width, *inp);
                let rows = x.rows();
                let mut y = vec![0.0; rows * out];
                if let Some(b) = b {
                    let bias = params.data(*b);
                    for r in y.chunks_mut(*out) {
                        r.copy_from_slice(bias);
                    }
                }
                gemm(&x.data, params.data(*w), &mut y, rows, *inp, *out);
                (Act::new(x.batch, x.steps, *out, y), Cache::None)
            }
            Op::BatchNorm {
                gamma,
                beta,
                mean,
                var,
            } => {
                let c = x.width;
                let rows = x.rows();
                let (g, bt) = (params.data(*gamma), params.data(*beta));
                let (mu, var_v) = match mode {
                    Mode::Eval => (params.data(*mean).to_vec(), params.data(*var).to_vec()),
                    Mode::Train { .. } => {
                        let mut mu = vec![0.0; c];
                        for r in x.data.chunks(c) {
                            for (m, v) in mu.iter_mut().zip(r) {
                                *m += v;
                            }
                        }
                        mu.iter_mut().for_each(|m| *m /= rows as f64);
                        let mut var_v = vec![0.0; c];
                        for r in x.data.chunks(c) {
                            for ((s, v), m) in var_v.iter_mut().zip(r).zip(&mu) {
                                *s += (v - m) * (v - m);
                            }
                        }
                        var_v.iter_mut().for_each(|s| *s /= rows as f64);
                        bn.push(BnStats {
                            mean_param: *mean,
                            var_param: *var,
                            mean: mu.clone(),
                            var: var_v.clone(),
                        });
                        (mu, var_v)
                    }
                };
                let inv_std: Vec<f64> = var_v
                    .iter()
                    .map(|v| 1.0 / (v + BN_EPSILON).sqrt())
                    .collect();
                let mut xhat = vec![0.0; x.data.len()];
                let mut y = vec![0.0; x.data.len()];
                for ((xr, hr), yr) in x
                    .data
                    .chunks(c)
                    .zip(xhat.chunks_mut(c))
                    .zip(y.chunks_mut(c))
                {
                    for j in 0..c {
                        hr[j] = (xr[j] - mu[j]) * inv_std[j];
                        yr[j] = g[j] * hr[j] + bt[j];
                    }
                }
                (
                    Act::new(x.batch, x.steps, c, y),
                    Cache::BatchNorm { xhat, inv_std },
                )
            }
            Op::Relu => {
                let y = x.data.iter().map(|&v| v.max(0.0)).collect();
                (Act::new(x.batch, x.steps, x.width, y), Cache::None)
            }
            Op::Dropout { rate } => match mode {
                Mode::Train { dropout_seed } if *rate > 0.0 => {
                    let mut rng = Rng::new(Rng::derive_seed(
                        dropout_seed,
                        &format!("dropout{op_index}"),
                    ));
                    let keep = 1.0 / (1.0 - rate);
                    let mask: Vec<f64> = (0..x.data.len())
                        .map(|_| if rng.next_f64() < *rate { 0.0 } else { keep })
                        .collect();
                    let y = x.data.iter().zip(&mask).map(|(v, m)| v * m).collect();
                    (
                        Act::new(x.batch, x.steps, x.width, y),
                        Cache::Dropout { mask },
                    )
                }
                _ => (x.clone(), Cache::None),
            },
            Op::Conv1d {
                w,
                b,
                kernel,
                inp,
                out,
                ..
            } => {
                let (steps, pad) = (x.steps, (kernel - 1) / 2);
                let wd = params.data(*w);
                let mut y = vec![0.0; x.batch * steps * out];
                if let Some(b) = b {
                    let bias = params.data(*b);
                    for r in y.chunks_mut(*out) {
                        r.copy_from_slice(bias);
                    }
                }
                for bi in 0..x.batch {
                    let xb = &x.data[bi * steps * inp..(bi + 1) * steps * inp];
                    let yb = &mut y[bi * steps * out..(bi + 1) * steps * out];
                    for j in 0..*kernel {
                        let (lo, hi, shift) = conv_range(steps, j, pad);
                        if lo >= hi {
                            continue;
                        }
                        let src = (lo as isize + shift) as usize;
                        gemm(
                            &xb[src * inp..(src + hi - lo) * inp],
                            &wd[j * inp * out..(j + 1) * inp * out],
                            &mut yb[lo * out..hi * out],
                            hi - lo,
                            *inp,
                            *out,
                        );
                    }
                }
                (Act::new(x.batch, steps, *out, y), Cache::None)
            }
            Op::TemporalMean => {
                let c = x.width;
                let mut y = vec![0.0; x.batch * c];
                for bi in 0..x.batch {
                    let yr = &mut y[bi * c..(bi + 1) * c];
                    for t in 0..x.steps {
                        let xr = &x.data[(bi * x.steps + t) * c..(bi * x.steps + t + 1) * c];
                        for (a, v) in yr.iter_mut().zip(xr) {
                            *a += v;
                        }
                    }
                    yr.iter_mut().for_each(|a| *a /= x.steps as f64);
                }
                (Act::new(x.batch, 1, c, y), Cache::None)
            }
            Op::Flatten => (
                Act::new(x.batch, 1, x.steps * x.width, x.data.clone()),
                Cache::None,
            ),
            Op::BiLstm {
                fwd,
                bwd,
                hidden,
                return_sequences,
                ..
            } => {
                let h = *hidden;
                let tf = lstm::forward(
                    x,
                    params.data(fwd.wx),
                    params.data(fwd.wh),
                    params.data(fwd.b),
                    h,
                    false,
                );
                let tb = lstm::forward(
                    x,
                    params.data(bwd.wx),
                    params.data(bwd.wh),
                    params.data(bwd.b),
                    h,
                    true,
                );
                let (bsz, steps) = (x.batch, x.steps);
                let y = if *return_sequences {
                    let mut y = vec![0.0; bsz * steps * 2 * h];
                    for s in 0..steps {
                        for bi in 0..bsz {
                            let t_f = tf.time_of(s);
                            let t_b = tb.time_of(s);
                            let hf = &tf.h_at_step(s)[bi * h..(bi + 1) * h];
                            let hb = &tb.h_at_step(s)[bi * h..(bi + 1) * h];
                            y[(bi * steps + t_f) * 2 * h..(bi * steps + t_f) * 2 * h + h]
                                .copy_from_slice(hf);
                            y[(bi * steps + t_b) * 2 * h + h..(bi * steps + t_b + 1) * 2 * h]
                                .copy_from_slice(hb);
                        }
                    }
                    Act::new(bsz, steps, 2 * h, y)
                } else {
                    let mut y = vec![0.0; bsz * 2 * h];
                    let (lf, lb) = (tf.h_at_step(steps - 1), tb.h_at_step(steps - 1));
                    for bi in 0..bsz {
                        y[bi * 2 * h..bi * 2 * h + h].copy_from_slice(&lf[bi * h..(bi + 1) * h]);
                        y[bi * 2 * h + h..(bi + 1) * 2 * h]
                            .copy_from_slice(&lb[bi * h..(bi + 1) * h]);
                    }
                    Act::new(bsz, 1, 2 * h, y)
                };
                (y, Cache::BiLstm { fwd: tf, bwd: tb })
            }
        }
    }

    /// Accumulates parameter gradients into `grads` and returns `dL/dx`.
    #[allow(clippy::too_many_arguments)]
    pub fn backward(
        &self,
        params: &ModelParams,
        x: &Act,
        y: &Act,
        cache: &Cache,
        dy: &Act,
        mode: Mode,
        grads: &mut [Tensor],
    ) -> Act {
        match self {
            Op::Dense { w, b, inp, out, .. } => {
                let rows = x.rows();
                gemm_tn(&x.data, &dy.data, grads[*w].data_mut(), rows, *inp, *out);
                if let Some(b) = b {
                    let gb = grads[*b].data_mut();
                    for r in dy.data.chunks(*out) {
                        for (g, v) in gb.iter_mut().zip(r) {
                            *g += v;
                        }
                    }
                }
                let mut dx = vec![0.0; rows * inp];
                let mut scratch = Vec::new();
                gemm_nt(
                    &dy.data,
                    params.data(*w),
                    &mut dx,
                    rows,
                    *out,
                    *inp,
                    &mut scratch,
                );
                Act::new(x.batch, x.steps, *inp, dx)
            }
            Op::BatchNorm { gamma, beta, .. } => {
                let Cache::BatchNorm { xhat, inv_std } = cache else {
                    unreachable!("batch norm cache")
                };
                let c = x.width;
                let n = x.rows() as f64;
                let g = params.data(*gamma);
                let mut sum_dy = vec![0.0; c];
                let mut sum_dy_xhat = vec![0.0; c];
                for (dr, hr) in dy.data.chunks(c).zip(xhat.chunks(c)) {
                    for j in 0..c {
                        sum_dy[j] += dr[j];
                        sum_dy_xhat[j] += dr[j] * hr[j];
                    }
                }
                for j in 0..c {
                    grads[*gamma].data_mut()[j] += sum_dy_xhat[j];
                    grads[*beta].data_mut()[j] += sum_dy[j];
                }
                let mut dx = vec![0.0; x.data.len()];
                match mode {
                    Mode::Train { .. } => {
                        for ((dxr, dr), hr) in
                            dx.chunks_mut(c).zip(dy.data.chunks(c)).zip(xhat.chunks(c))
                        {
                            for j in 0..c {
                                dxr[j] = g[j] * inv_std[j] / n
                                    * (n * dr[j] - sum_dy[j] - hr[j] * sum_dy_xhat[j]);
                            }
                        }
                    }
                    Mode::Eval => {
                        for (dxr, dr) in dx.chunks_mut(c).zip(dy.data.chunks(c)) {
                            for j in 0..c {
                                dxr[j] = g[j] * inv_std[j] * dr[j];
                            }
                        }
                    }
                }
                Act::new(x.batch, x.steps, c, dx)
            }
            Op::Relu => {
                let dx = dy
                    .data
                    .iter()
                    .zip(&y.data)
                    .map(|(d, v)| if *v > 0.0 { *d } else { 0.0 })
                    .collect();
                Act::new(x.batch, x.steps, x.width, dx)
            }
            Op::Dropout { .. } => match cache {
                Cache::Dropout { mask } => {
                    let dx = dy.data.iter().zip(mask).map(|(d, m)| d * m).collect();
                    Act::new(x.batch, x.steps, x.width, dx)
                }
                _ => dy.clone(),
            },
            Op::Conv1d {
                w,
                b,
                kernel,
                inp,
                out,
                ..
            } => {
                let (steps, pad) = (x.steps, (kernel - 1) / 2);
                let wd = params.data(*w);
                let mut dx = vec![0.0; x.data.len()];
                let mut scratch = Vec::new();
                if let Some(b) = b {
                    let gb = grads[*b].data_mut();
                    for r in dy.data.chunks(*out) {
                        for (g, v) in gb.iter_mut().zip(r) {
                            *g += v;
                        }
                    }
                }
                for bi in 0..x.batch {
                    let xb = &x.data[bi * steps * inp..(bi + 1) * steps * inp];
                    let db = &dy.data[bi * steps * out..(bi + 1) * steps * out];
                    let dxb = &mut dx[bi * steps * inp..(bi + 1) * steps * inp];
                    for j in 0..*kernel {
                        let (lo, hi, shift) = conv_range(steps, j, pad);
                        if lo >= hi {
                            continue;
                        }
                        let src = (lo as isize + shift) as usize;
                        let n = hi - lo;
                        gemm_tn(
                            &xb[src * inp..(src + n) * inp],
                            &db[lo * out..hi * out],
                            &mut grads[*w].data_mut()[j * inp * out..(j + 1) * inp * out],
                            n,
                            *inp,
                            *out,
                        );
                        gemm_nt(
                            &db[lo * out..hi * out],
                            &wd[j * inp * out..(j + 1) * inp * out],
                            &mut dxb[src * inp..(src + n) * inp],
                            n,
                            *out,
                            *inp,
                            &mut scratch,
                        );
                    }
                }
                Act::new(x.batch, steps, *inp, dx)
            }
            Op::TemporalMean => {
                let c = x.width;
                let mut dx = vec![0.0; x.data.len()];
                let scale = 1.0 / x.steps as f64;
                for bi in 0..x.batch {
                    let dr = &dy.data[bi * c..(bi + 1) * c];
                    for t in 0..x.steps {
                        let o = (bi * x.steps + t) * c;
                        for j in 0..c {
                            dx[o + j] = dr[j] * scale;
                        }
                    }
                }
                Act::new(x.batch, x.steps, c, dx)
            }
            Op::Flatten => Act::new(x.batch, x.steps, x.width, dy.data.clone()),
            Op::BiLstm {
                fwd,
                bwd,
                hidden,
                return_sequences,
                ..
            } => {
                let Cache::BiLstm { fwd: tf, bwd: tb } = cache else {
                    unreachable!("lstm cache")
                };
                let h = *hidden;
                let (bsz, steps) = (x.batch, x.steps);
                // split dy into per-direction [batch][time][H]
                let mut dhf = vec![0.0; bsz * steps * h];
                let mut dhb = vec![0.0; bsz * steps * h];
                if *return_sequences {
                    for bi in 0..bsz {
                        for t in 0..steps {
                            let r =
                                &dy.data[(bi * steps + t) * 2 * h..(bi * steps + t + 1) * 2 * h];
                            dhf[(bi * steps + t) * h..(bi * steps + t + 1) * h]
                                .copy_from_slice(&r[..h]);
                            dhb[(bi * steps + t) * h..(bi * steps + t + 1) * h]
                                .copy_from_slice(&r[h..]);
                        }
                    }
                } else {
                    let (t_f, t_b) = (steps - 1, 0);
                    for bi in 0..bsz {
                        let r = &dy.data[bi * 2 * h..(bi + 1) * 2 * h];
                        dhf[(bi * steps + t_f) * h..(bi * steps + t_f + 1) * h]
                            .copy_from_slice(&r[..h]);
                        dhb[(bi * steps + t_b) * h..(bi * steps + t_b + 1) * h]
                            .copy_from_slice(&r[h..]);
                    }
                }
                let mut dx = lstm_dir_backward(params, x, *fwd, tf, &dhf, grads);
                let dxb = lstm_dir_backward(params, x, *bwd, tb, &dhb, grads);
                for (a, b) in dx.iter_mut().zip(&dxb) {
                    *a += b;
                }
                Act::new(bsz, steps, x.width, dx)
            }
        }
    }
}

fn lstm_dir_backward(
    params: &ModelParams,
    x: &Act,
    idx: LstmIdx,
    trace: &LstmTrace,
    dh: &[f64],
    grads: &mut [Tensor],
) -> Vec<f64> {
    // three distinct tensors; take them out to borrow mutably at once
    let mut gwx = std::mem::replace(&mut grads[idx.wx], Tensor::zeros(&[1]));
    let mut gwh = std::mem::replace(&mut grads[idx.wh], Tensor::zeros(&[1]));
    let mut gb = std::mem::replace(&mut grads[idx.b], Tensor::zeros(&[1]));
    let dx = lstm::backward(
        x,
        params.data(idx.wx),
        params.data(idx.wh),
        trace,
        dh,
        LstmGrads {
            wx: gwx.data_mut(),
            wh: gwh.data_mut(),
            b: gb.data_mut(),
        },
    );
    grads[idx.wx] = gwx;
    grads[idx.wh] = gwh;
    grads[idx.b] = gb;
    dx
}

/// Output rows `[lo, hi)` that tap input row `t + shift` through kernel position `j`.
fn conv_range(steps: usize, j: usize, pad: usize) -> (usize, usize, isize) {
    let shift = j as isize - pad as isize;
    let lo = (-shift).max(0) as usize;
    let hi = (steps as isize - shift).min(steps as isize).max(0) as usize;
    (lo, hi, shift)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nets::params::Param;
    use crate::numcore::grad_check;

    fn rand_vec(rng: &mut Rng, n: usize, scale: f64) -> Vec<f64> {
        (0..n).map(|_| rng.uniform(-scale, scale)).collect()
    }

    fn param(name: &str, shape: &[usize], data: Vec<f64>, trainable: bool) -> Param {
        Param {
            name: name.into(),
            tensor: Tensor::new(shape.to_vec(), data).unwrap(),
            trainable,
        }
    }

    /// Checks d(Σ y·r)/d(params, x) for a single op against central differences.
    fn check(op: &Op, params: ModelParams, x: Act, mode: Mode) -> f64 {
        let mut rng = Rng::new(99);
        let (y0, _) = op.forward(&params, &x, mode, 0, &mut Vec::new());
        let r = rand_vec(&mut rng, y0.data.len(), 1.0);
        let objective = |p: &ModelParams, x: &Act| {
            let (y, _) = op.forward(p, x, mode, 0, &mut Vec::new());
            y.data.iter().zip(&r).map(|(a, b)| a * b).sum::<f64>()
        };
        let (y, cache) = op.forward(&params, &x, mode, 0, &mut Vec::new());
        let mut grads: Vec<Tensor> = params
            .params
            .iter()
            .map(|p| Tensor::zeros(p.tensor.shape()))
            .collect();
        let dy = Act::new(y.batch, y.steps, y.width, r.clone());
        let dx = op.backward(&params, &x, &y, &cache, &dy, mode, &mut grads);

        let np = params.trainable_count();
        let mut point = params.flat();
        point.extend_from_slice(&x.data);
        let mut analytic = crate::nets::params::flatten_grads(&params, &grads);
        analytic.extend_from_slice(&dx.data);
        let f = |v: &[f64]| {
            let mut p = params.clone();
            p.set_flat(&v[..np]);
            let xx = Act::new(x.batch, x.steps, x.width, v[np..].to_vec());
            objective(&p, &xx)
        };
        grad_check(f, &point, &analytic, 1e-5)
            .unwrap()
            .max_rel_error
    }

    const TRAIN: Mode = Mode::Train { dropout_seed: 5 };

    #[test]
    fn dense_gradients() {
        let mut rng = Rng::new(1);
        let params = ModelParams {
            params: vec![
                param("w", &[5, 3], rand_vec(&mut rng, 15, 1.0), true),
                param("b", &[3], rand_vec(&mut rng, 3, 1.0), true),
            ],
        };
        let op = Op::Dense {
            name: "d".into(),
            w: 0,
            b: Some(1),
            inp: 5,
            out: 3,
        };
        let x = Act::new(4, 1, 5, rand_vec(&mut rng, 20, 1.0));
        assert!(check(&op, params, x, Mode::Eval) < 1e-7);
    }

    #[test]
    fn batchnorm_gradients_both_modes() {
        let mut rng = Rng::new(2);
        let params = ModelParams {
            params: vec![
                param("g", &[3], rand_vec(&mut rng, 3, 2.0), true),
                param("b", &[3], rand_vec(&mut rng, 3, 1.0), true),
                param("m", &[3], rand_vec(&mut rng, 3, 1.0), false),
                param("v", &[3], vec![0.5, 1.0, 2.0], false),
            ],
        };
        let op = Op::BatchNorm {
            gamma: 0,
            beta: 1,
            mean: 2,
            var: 3,
        };
        let x = Act::new(3, 2, 3, rand_vec(&mut rng, 18, 1.0));
        assert!(check(&op, params.clone(), x.clone(), TRAIN) < 1e-6);
        assert!(check(&op, params, x, Mode::Eval) < 1e-7);
    }

    #[test]
    fn relu_dropout_pool_flatten_gradients() {
        let mut rng = Rng::new(3);
        // keep inputs away from the ReLU kink
        let x: Vec<f64> = rand_vec(&mut rng, 24, 1.0)
            .into_iter()
            .map(|v| if v.abs() < 0.05 { 0.3 } else { v })
            .collect();
        let x = Act::new(2, 3, 4, x);
        let empty = ModelParams { params: vec![] };
        for op in [
            Op::Relu,
            Op::Dropout { rate: 0.4 },
            Op::TemporalMean,
            Op::Flatten,
        ] {
            assert!(check(&op, empty.clone(), x.clone(), TRAIN) < 1e-7, "{op:?}");
        }
    }

    #[test]
    fn dropout_is_identity_in_eval_and_scaled_in_train() {
        let x = Act::new(1, 1, 1000, vec![1.0; 1000]);
        let empty = ModelParams { params: vec![] };
        let op = Op::Dropout { rate: 0.25 };
        let (y, _) = op.forward(&empty, &x, Mode::Eval, 0, &mut Vec::new());
        assert_eq!(y, x);
        let (y, _) = op.forward(&empty, &x, TRAIN, 0, &mut Vec::new());
        let dropped = y.data.iter().filter(|v| **v == 0.0).count();
        assert!((150..350).contains(&dropped));
        assert!(y
            .data
            .iter()
            .all(|v| *v == 0.0 || (v - 4.0 / 3.0).abs() < 1e-12));
    }

    #[test]
    fn conv_gradients() {
        let mut rng = Rng::new(4);
        let (k, inp, out) = (3, 2, 3);
        let params = ModelParams {
            params: vec![
                param(
                    "w",
                    &[k * inp, out],
                    rand_vec(&mut rng, k * inp * out, 1.0),
                    true,
                ),
                param("b", &[out], rand_vec(&mut rng, out, 1.0), true),
            ],
        };
        let op = Op::Conv1d {
            name: "c".into(),
            w: 0,
            b: Some(1),
            kernel: k,
            inp,
            out,
        };
        let x = Act::new(2, 5, inp, rand_vec(&mut rng, 20, 1.0));
        assert!(check(&op, params, x, Mode::Eval) < 1e-7);
    }

    #[test]
    fn conv_matches_direct_same_padding() {
        let mut rng = Rng::new(6);
        let (k, inp, out, steps) = (3, 2, 2, 4);
        let w = rand_vec(&mut rng, k * inp * out, 1.0);
        let params = ModelParams {
            params: vec![param("w", &[k * inp, out], w.clone(), true)],
        };
        let op = Op::Conv1d {
            name: "c".into(),
            w: 0,
            b: None,
            kernel: k,
            inp,
            out,
        };
        let x = Act::new(1, steps, inp, rand_vec(&mut rng, steps * inp, 1.0));
        let (y, _) = op.forward(&params, &x, Mode::Eval, 0, &mut Vec::new());
        for t in 0..steps {
            for o in 0..out {
                let mut s = 0.0;
                for j in 0..k {
                    let src = t as isize + j as isize - 1;
                    if src < 0 || src >= steps as isize {
                        continue;
                    }
                    for i in 0..inp {
                        s += x.data[src as usize * inp + i] * w[(j * inp + i) * out + o];
                    }
                }
                assert!((y.data[t * out + o] - s).abs() < 1e-12);
            }
        }
    }

    fn bilstm_params(rng: &mut Rng, inp: usize, h: usize) -> ModelParams {
        let mut params = Vec::new();
        for dir in ["f", "b"] {
            params.push(param(
                &format!("{dir}.wx"),
                &[inp, 4 * h],
                rand_vec(rng, inp * 4 * h, 0.6),
                true,
            ));
            params.push(param(
                &format!("{dir}.wh"),
                &[h, 4 * h],
                rand_vec(rng, h * 4 * h, 0.6),
                true,
            ));
            params.push(param(
                &format!("{dir}.b"),
                &[4 * h],
                rand_vec(rng, 4 * h, 0.6),
                true,
            ));
        }
        ModelParams { params }
    }

    fn bilstm_op(h: usize, seq: bool) -> Op {
        Op::BiLstm {
            name: "l".into(),
            fwd: LstmIdx { wx: 0, wh: 1, b: 2 },
            bwd: LstmIdx { wx: 3, wh: 4, b: 5 },
            hidden: h,
            return_sequences: seq,
        }
    }

    #[test]
    fn bilstm_gradients() {
        let mut rng = Rng::new(7);
        for seq in [true, false] {
            let params = bilstm_params(&mut rng, 3, 2);
            let x = Act::new(2, 4, 3, rand_vec(&mut rng, 24, 1.0));
            let err = check(&bilstm_op(2, seq), params, x, Mode::Eval);
            assert!(err < 1e-6, "return_sequences={seq}: {err}");
        }
    }

    #[test]
    fn backward_direction_on_reversed_input_mirrors_forward() {
        let mut rng = Rng::new(8);
        let mut params = bilstm_params(&mut rng, 3, 4);
        for i in 0..3 {
            params.params[i + 3].tensor = params.params[i].tensor.clone();
        }
        let (bsz, steps, w) = (2, 6, 3);
        let x = Act::new(bsz, steps, w, rand_vec(&mut rng, bsz * steps * w, 1.0));
        let mut rev = x.clone();
        for b in 0..bsz {
            for t in 0..steps {
                let src = &x.data[(b * steps + steps - 1 - t) * w..(b * steps + steps - t) * w];
                rev.data[(b * steps + t) * w..(b * steps + t + 1) * w].copy_from_slice(src);
            }
        }
        let op = bilstm_op(4, true);
        let (y, _) = op.forward(&params, &x, Mode::Eval, 0, &mut Vec::new());
        let (yr, _) = op.forward(&params, &rev, Mode::Eval, 0, &mut Vec::new());
        for b in 0..bsz {
            for t in 0..steps {
                let fwd = &y.data[(b * steps + t) * 8..(b * steps + t) * 8 + 4];
                let bwd_rev =
                    &yr.data[(b * steps + steps - 1 - t) * 8 + 4..(b * steps + steps - t) * 8];
                for (a, c) in fwd.iter().zip(bwd_rev) {
                    assert!((a - c).abs() < 1e-14);
                }
            }
        }
    }
}

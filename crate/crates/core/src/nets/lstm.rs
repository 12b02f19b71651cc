//! One direction of an LSTM layer with backpropagation through time.
//!
//! Gate layout along the `4H` axis is `[input, forget, cell, output]`:
//!
//! ```text
//! z = x·Wx + h·Wh + b
//! i = σ(z_i)  f = σ(z_f)  g = tanh(z_g)  o = σ(z_o)
//! c = f⊙c' + i⊙g        h = o⊙tanh(c)
//! ```

use super::act::Act;
use crate::numcore::kernels::{gemm, gemm_nt, gemm_tn, sigmoid, transpose_into};

/// Everything the backward pass needs, indexed by processing step.
#[derive(Debug, Clone)]
pub struct LstmTrace {
    pub reverse: bool,
    pub steps: usize,
    pub batch: usize,
    pub hidden: usize,
    /// Activated gates, `[step][batch][4H]`.
    pub gates: Vec<f64>,
    /// Cell state, `[step][batch][H]`.
    pub cell: Vec<f64>,
    pub tanh_cell: Vec<f64>,
    /// Hidden state, `[step][batch][H]`.
    pub hidden_state: Vec<f64>,
}

impl LstmTrace {
    /// Time index visited at processing step `s`.
    pub fn time_of(&self, s: usize) -> usize {
        if self.reverse {
            self.steps - 1 - s
        } else {
            s
        }
    }

    pub fn h_at_step(&self, s: usize) -> &[f64] {
        let n = self.batch * self.hidden;
        &self.hidden_state[s * n..(s + 1) * n]
    }
}

/// Gradients of one direction's parameters.
pub struct LstmGrads<'a> {
    pub wx: &'a mut [f64],
    pub wh: &'a mut [f64],
    pub b: &'a mut [f64],
}

pub fn forward(
    x: &Act,
    wx: &[f64],
    wh: &[f64],
    bias: &[f64],
    hidden: usize,
    reverse: bool,
) -> LstmTrace {
    let (bsz, steps, inp) = (x.batch, x.steps, x.width);
    let g4 = 4 * hidden;
    // input projections for every (batch, time) row at once
    let mut xw = vec![0.0; bsz * steps * g4];
    gemm(&x.data, wx, &mut xw, bsz * steps, inp, g4);

    let mut tr = LstmTrace {
        reverse,
        steps,
        batch: bsz,
        hidden,
        gates: vec![0.0; steps * bsz * g4],
        cell: vec![0.0; steps * bsz * hidden],
        tanh_cell: vec![0.0; steps * bsz * hidden],
        hidden_state: vec![0.0; steps * bsz * hidden],
    };
    let mut z = vec![0.0; bsz * g4];
    for s in 0..steps {
        let t = tr.time_of(s);
        for b in 0..bsz {
            let row = &xw[(b * steps + t) * g4..(b * steps + t + 1) * g4];
            let zr = &mut z[b * g4..(b + 1) * g4];
            for ((zv, xv), bv) in zr.iter_mut().zip(row).zip(bias) {
                *zv = xv + bv;
            }
        }
        if s > 0 {
            let hp = &tr.hidden_state[(s - 1) * bsz * hidden..s * bsz * hidden];
            gemm(hp, wh, &mut z, bsz, hidden, g4);
        }
        for b in 0..bsz {
            let zr = &z[b * g4..(b + 1) * g4];
            let gates = &mut tr.gates[(s * bsz + b) * g4..(s * bsz + b + 1) * g4];
            for j in 0..hidden {
                gates[j] = sigmoid(zr[j]);
                gates[hidden + j] = sigmoid(zr[hidden + j]);
                gates[2 * hidden + j] = zr[2 * hidden + j].tanh();
                gates[3 * hidden + j] = sigmoid(zr[3 * hidden + j]);
            }
            let base = (s * bsz + b) * hidden;
            for j in 0..hidden {
                let c_prev = if s > 0 {
                    tr.cell[((s - 1) * bsz + b) * hidden + j]
                } else {
                    0.0
                };
                let c = gates[hidden + j] * c_prev + gates[j] * gates[2 * hidden + j];
                let tc = c.tanh();
                tr.cell[base + j] = c;
                tr.tanh_cell[base + j] = tc;
                tr.hidden_state[base + j] = gates[3 * hidden + j] * tc;
            }
        }
    }
    tr
}

/// Backpropagates `dh_out` (gradient w.r.t. the hidden output at each time
/// index, `[batch][time][H]`) and returns the gradient w.r.t. `x`.
pub fn backward(
    x: &Act,
    wx: &[f64],
    wh: &[f64],
    tr: &LstmTrace,
    dh_out: &[f64],
    grads: LstmGrads<'_>,
) -> Vec<f64> {
    let (bsz, steps, inp, hidden) = (x.batch, x.steps, x.width, tr.hidden);
    let g4 = 4 * hidden;
    let mut dxw = vec![0.0; bsz * steps * g4];
    let mut dh_next = vec![0.0; bsz * hidden];
    let mut dc_next = vec![0.0; bsz * hidden];
    let mut dz = vec![0.0; bsz * g4];
    let mut scratch = Vec::new();
    let mut wh_t = Vec::new();
    transpose_into(wh, hidden, g4, &mut wh_t);

    for s in (0..steps).rev() {
        let t = tr.time_of(s);
        for b in 0..bsz {
            let base = (s * bsz + b) * hidden;
            let gates = &tr.gates[(s * bsz + b) * g4..(s * bsz + b + 1) * g4];
            let dzr = &mut dz[b * g4..(b + 1) * g4];
            for j in 0..hidden {
                let (i, f, g, o) = (
                    gates[j],
                    gates[hidden + j],
                    gates[2 * hidden + j],
                    gates[3 * hidden + j],
                );
                let tc = tr.tanh_cell[base + j];
                let dh = dh_out[(b * steps + t) * hidden + j] + dh_next[b * hidden + j];
                let d_o = dh * tc;
                let dc = dh * o * (1.0 - tc * tc) + dc_next[b * hidden + j];
                let c_prev = if s > 0 {
                    tr.cell[((s - 1) * bsz + b) * hidden + j]
                } else {
                    0.0
                };
                dc_next[b * hidden + j] = dc * f;
                dzr[j] = dc * g * i * (1.0 - i);
                dzr[hidden + j] = dc * c_prev * f * (1.0 - f);
                dzr[2 * hidden + j] = dc * i * (1.0 - g * g);
                dzr[3 * hidden + j] = d_o * o * (1.0 - o);
            }
            dxw[(b * steps + t) * g4..(b * steps + t + 1) * g4].copy_from_slice(dzr);
        }
        dh_next.iter_mut().for_each(|v| *v = 0.0);
        if s > 0 {
            let hp = &tr.hidden_state[(s - 1) * bsz * hidden..s * bsz * hidden];
            gemm_tn(hp, &dz, grads.wh, bsz, hidden, g4);
            gemm(&dz, &wh_t, &mut dh_next, bsz, g4, hidden);
        }
    }
    gemm_tn(&x.data, &dxw, grads.wx, bsz * steps, inp, g4);
    for row in dxw.chunks(g4) {
        for (gb, v) in grads.b.iter_mut().zip(row) {
            *gb += v;
        }
    }
    let mut dx = vec![0.0; bsz * steps * inp];
    gemm_nt(&dxw, wx, &mut dx, bsz * steps, g4, inp, &mut scratch);
    dx
}

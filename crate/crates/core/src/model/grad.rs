//! Loss and exact gradients for the head.
//!
//! One output: sigmoid + binary cross-entropy. Two outputs: softmax +
//! cross-entropy. Both are averaged over the batch. Per-sample gradients
//! may be computed in parallel; they are always summed in batch order.

use serde::{Deserialize, Serialize};

use super::{forward_trace, sigmoid, HeadParams, Mode};
use crate::error::{Error, Result};
use crate::par::{self, Parallelism};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub x: Vec<f64>,
    pub label: u8,
}

impl Example {
    pub fn new(x: Vec<f64>, label: u8) -> Self {
        Example { x, label }
    }
}

#[derive(Debug, Clone)]
pub struct LossAndGrad {
    pub loss: f64,
    /// Same shape as the parameters.
    pub grad: HeadParams,
}

/// Per-sample dropout seed inside a batch.
pub(crate) fn sample_mode(mode: Mode, index: usize) -> Mode {
    match mode {
        Mode::Eval => Mode::Eval,
        Mode::Train { dropout_seed } => Mode::Train {
            dropout_seed: rng::derive(dropout_seed, index as u64),
        },
    }
}

/// Loss and d(loss)/d(logits) for one sample.
fn output_loss(logits: &[f64], label: u8) -> (f64, Vec<f64>) {
    let y = f64::from(label);
    if logits.len() == 1 {
        let z = logits[0];
        // softplus(z) - y z, written to avoid overflow
        let loss = z.max(0.0) - y * z + (-z.abs()).exp().ln_1p();
        (loss, vec![sigmoid(z) - y])
    } else {
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
        let loss = lse - logits[label as usize];
        let dz = logits
            .iter()
            .enumerate()
            .map(|(k, z)| (z - lse).exp() - if k == label as usize { 1.0 } else { 0.0 })
            .collect();
        (loss, dz)
    }
}

fn sample_grad(h: &HeadParams, ex: &Example, mode: Mode) -> Result<(f64, HeadParams)> {
    let tr = forward_trace(h, &ex.x, mode)?;
    let (loss, dz) = output_loss(&tr.logits, ex.label);
    let mut g = HeadParams::zeros(h.input_dim, h.hidden_dim, h.out_dim);
    g.dropout_p = h.dropout_p;

    let mut d_hidden = vec![0.0; h.hidden_dim];
    for (k, &dzk) in dz.iter().enumerate() {
        g.b2[k] = dzk;
        let w_row = &h.w2[k * h.hidden_dim..(k + 1) * h.hidden_dim];
        let g_row = &mut g.w2[k * h.hidden_dim..(k + 1) * h.hidden_dim];
        for j in 0..h.hidden_dim {
            g_row[j] = dzk * tr.hidden[j];
            d_hidden[j] += dzk * w_row[j];
        }
    }
    for j in 0..h.hidden_dim {
        // ReLU passes gradient only where its input (mask * pre) is positive
        let d_pre = if tr.mask[j] * tr.pre[j] > 0.0 {
            d_hidden[j] * tr.mask[j]
        } else {
            0.0
        };
        g.b1[j] = d_pre;
        if d_pre != 0.0 {
            let row = &mut g.w1[j * h.input_dim..(j + 1) * h.input_dim];
            for (gw, xi) in row.iter_mut().zip(&ex.x) {
                *gw = d_pre * xi;
            }
        }
    }
    Ok((loss, g))
}

/// Mean loss over `batch` and its exact gradient.
pub fn loss_and_grad(
    h: &HeadParams,
    batch: &[&Example],
    mode: Mode,
    parallelism: Parallelism,
) -> Result<LossAndGrad> {
    if batch.is_empty() {
        return Err(Error::Domain("empty batch".into()));
    }
    if let Some(bad) = batch.iter().find(|e| e.label > 1) {
        return Err(Error::Domain(format!("label must be 0 or 1, got {}", bad.label)));
    }
    if !(h.out_dim == 1 || h.out_dim == 2) {
        return Err(Error::Domain(format!("unsupported out_dim {}", h.out_dim)));
    }
    let parts = par::try_map_indexed(parallelism, batch, |i, ex| {
        sample_grad(h, ex, sample_mode(mode, i))
    })?;
    let n = batch.len() as f64;
    let mut total = HeadParams::zeros(h.input_dim, h.hidden_dim, h.out_dim);
    total.dropout_p = h.dropout_p;
    let mut loss = 0.0;
    for (l, g) in parts {
        loss += l;
        for (t, v) in total.flat_mut().zip(g.flat()) {
            *t += v;
        }
    }
    total.flat_mut().for_each(|t| *t /= n);
    Ok(LossAndGrad {
        loss: loss / n,
        grad: total,
    })
}

/// Mean loss only (no gradient), used by finite-difference checks and
/// monitoring.
pub fn mean_loss(h: &HeadParams, batch: &[&Example], mode: Mode) -> Result<f64> {
    let mut total = 0.0;
    for (i, ex) in batch.iter().enumerate() {
        let tr = forward_trace(h, &ex.x, sample_mode(mode, i))?;
        total += output_loss(&tr.logits, ex.label).0;
    }
    Ok(total / batch.len() as f64)
}

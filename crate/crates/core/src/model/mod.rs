//! The classification head: a one-hidden-layer feed-forward network over
//! the concatenation of a document embedding and the scaled handcrafted
//! features.
//!
//! ```text
//! x (1103) -> W1 x + b1 (128) -> dropout(0.5) -> ReLU -> W2 h + b2 (1 or 2)
//! ```

mod grad;
mod policy;
mod train;

use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FEATURE_DIM;
use crate::embed::DEFAULT_ENCODER_DIM;
use crate::rng;

pub use grad::{loss_and_grad, mean_loss, Example, LossAndGrad};
pub use policy::{decide, decide_logits, Decision, DecisionKind, DecisionPolicy, RunId};
pub use train::{cross_validate, stratified_folds, train_head, FoldResult, TrainConfig, Trainer};

pub const HEAD_INPUT_DIM: usize = DEFAULT_ENCODER_DIM + FEATURE_DIM;
pub const HIDDEN_DIM: usize = 128;
pub const DROPOUT_P: f64 = 0.5;

const _: () = assert!(HEAD_INPUT_DIM == 1103);

/// Head weights. Matrices are row-major `rows x cols`.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub out_dim: usize,
    pub dropout_p: f64,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl HeadParams {
    pub fn zeros(input_dim: usize, hidden_dim: usize, out_dim: usize) -> Self {
        HeadParams {
            input_dim,
            hidden_dim,
            out_dim,
            dropout_p: DROPOUT_P,
            w1: vec![0.0; hidden_dim * input_dim],
            b1: vec![0.0; hidden_dim],
            w2: vec![0.0; out_dim * hidden_dim],
            b2: vec![0.0; out_dim],
        }
    }

    pub fn num_params(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    /// All parameters in a fixed order: W1, b1, W2, b2.
    pub fn flat(&self) -> impl Iterator<Item = &f64> {
        self.w1.iter().chain(&self.b1).chain(&self.w2).chain(&self.b2)
    }

    pub fn flat_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.w1
            .iter_mut()
            .chain(self.b1.iter_mut())
            .chain(self.w2.iter_mut())
            .chain(self.b2.iter_mut())
    }

    /// Mutable access to the `i`-th parameter in [`HeadParams::flat`] order.
    pub fn param_mut(&mut self, i: usize) -> &mut f64 {
        let (n1, n2, n3) = (self.w1.len(), self.b1.len(), self.w2.len());
        if i < n1 {
            &mut self.w1[i]
        } else if i < n1 + n2 {
            &mut self.b1[i - n1]
        } else if i < n1 + n2 + n3 {
            &mut self.w2[i - n1 - n2]
        } else {
            &mut self.b2[i - n1 - n2 - n3]
        }
    }

    pub fn is_finite(&self) -> bool {
        self.flat().all(|x| x.is_finite())
    }
}

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases.
pub fn init_head(seed: u64, out_dim: usize) -> Result<HeadParams> {
    init_head_with_dims(seed, HEAD_INPUT_DIM, HIDDEN_DIM, out_dim)
}

pub fn init_head_with_dims(
    seed: u64,
    input_dim: usize,
    hidden_dim: usize,
    out_dim: usize,
) -> Result<HeadParams> {
    if !(out_dim == 1 || out_dim == 2) {
        return Err(Error::Domain(format!("out_dim must be 1 or 2, got {out_dim}")));
    }
    if input_dim == 0 || hidden_dim == 0 {
        return Err(Error::Domain("head dimensions must be positive".into()));
    }
    let mut h = HeadParams::zeros(input_dim, hidden_dim, out_dim);
    let mut r = rng::rng(seed, 0x1417);
    let bound1 = 1.0 / (input_dim as f64).sqrt();
    h.w1.iter_mut().for_each(|w| *w = r.gen_range(-bound1..bound1));
    let bound2 = 1.0 / (hidden_dim as f64).sqrt();
    h.w2.iter_mut().for_each(|w| *w = r.gen_range(-bound2..bound2));
    Ok(h)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Eval,
    /// Dropout active; the mask is a pure function of this seed.
    Train { dropout_seed: u64 },
}

/// Intermediate values of one forward pass, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct Trace {
    /// W1 x + b1.
    pub pre: Vec<f64>,
    /// Per-unit dropout multiplier: 0 or 1/(1-p) in training, 1 in eval.
    pub mask: Vec<f64>,
    /// ReLU(mask * pre).
    pub hidden: Vec<f64>,
    pub logits: Vec<f64>,
}

fn dropout_mask(hidden_dim: usize, p: f64, mode: Mode) -> Vec<f64> {
    match mode {
        Mode::Eval => vec![1.0; hidden_dim],
        Mode::Train { dropout_seed } => {
            let mut r = rng::rng(dropout_seed, 0xd20);
            let keep = 1.0 / (1.0 - p);
            (0..hidden_dim)
                .map(|_| if r.gen::<f64>() < p { 0.0 } else { keep })
                .collect()
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn forward_trace(h: &HeadParams, x: &[f64], mode: Mode) -> Result<Trace> {
    if x.len() != h.input_dim {
        return Err(Error::Domain(format!(
            "head expects an input of length {}, got {}",
            h.input_dim,
            x.len()
        )));
    }
    let pre: Vec<f64> = h
        .w1
        .chunks_exact(h.input_dim)
        .zip(&h.b1)
        .map(|(row, b)| dot(row, x) + b)
        .collect();
    let mask = dropout_mask(h.hidden_dim, h.dropout_p, mode);
    let hidden: Vec<f64> = pre
        .iter()
        .zip(&mask)
        .map(|(a, m)| (a * m).max(0.0))
        .collect();
    let logits = h
        .w2
        .chunks_exact(h.hidden_dim)
        .zip(&h.b2)
        .map(|(row, b)| dot(row, &hidden) + b)
        .collect();
    Ok(Trace {
        pre,
        mask,
        hidden,
        logits,
    })
}

pub fn forward(h: &HeadParams, x: &[f64], mode: Mode) -> Result<Vec<f64>> {
    Ok(forward_trace(h, x, mode)?.logits)
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    dims: [usize; 2],
    out_dim: usize,
    dropout_p: f64,
    #[serde(rename = "W1")]
    w1: Vec<Vec<f64>>,
    b1: Vec<f64>,
    #[serde(rename = "W2")]
    w2: Vec<Vec<f64>>,
    b2: Vec<f64>,
    seed: u64,
    config: TrainConfig,
}

impl HeadParams {
    pub fn save(&self, path: impl AsRef<Path>, seed: u64, config: &TrainConfig) -> Result<()> {
        let path = path.as_ref();
        let ck = Checkpoint {
            dims: [self.input_dim, self.hidden_dim],
            out_dim: self.out_dim,
            dropout_p: self.dropout_p,
            w1: self.w1.chunks(self.input_dim).map(<[f64]>::to_vec).collect(),
            b1: self.b1.clone(),
            w2: self.w2.chunks(self.hidden_dim).map(<[f64]>::to_vec).collect(),
            b2: self.b2.clone(),
            seed,
            config: config.clone(),
        };
        fs::write(path, serde_json::to_string(&ck)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<(HeadParams, TrainConfig)> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ck: Checkpoint = serde_json::from_str(&text)?;
        let [input_dim, hidden_dim] = ck.dims;
        let bad = |what: &str| Error::Validation(format!("{}: {what} has the wrong shape", path.display()));
        if ck.w1.len() != hidden_dim || ck.w1.iter().any(|r| r.len() != input_dim) {
            return Err(bad("W1"));
        }
        if ck.b1.len() != hidden_dim {
            return Err(bad("b1"));
        }
        if ck.w2.len() != ck.out_dim || ck.w2.iter().any(|r| r.len() != hidden_dim) {
            return Err(bad("W2"));
        }
        if ck.b2.len() != ck.out_dim {
            return Err(bad("b2"));
        }
        let h = HeadParams {
            input_dim,
            hidden_dim,
            out_dim: ck.out_dim,
            dropout_p: ck.dropout_p,
            w1: ck.w1.concat(),
            b1: ck.b1,
            w2: ck.w2.concat(),
            b2: ck.b2,
        };
        if !h.is_finite() {
            return Err(Error::Validation(format!("{}: non-finite parameters", path.display())));
        }
        Ok((h, ck.config))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_seeded_and_shaped() {
        let a = init_head(7, 2).unwrap();
        assert_eq!(a, init_head(7, 2).unwrap());
        assert_ne!(a, init_head(8, 2).unwrap());
        assert_eq!(a.w1.len(), 128 * 1103);
        assert_eq!(a.w2.len(), 2 * 128);
        assert!(a.b1.iter().chain(&a.b2).all(|b| *b == 0.0));
        let bound = 1.0 / 1103f64.sqrt();
        assert!(a.w1.iter().all(|w| w.abs() <= bound));
        assert!(matches!(init_head(7, 3), Err(Error::Domain(_))));
    }

    #[test]
    fn zero_head_gives_even_softmax() {
        let h = HeadParams::zeros(HEAD_INPUT_DIM, HIDDEN_DIM, 2);
        let z = forward(&h, &vec![0.3; HEAD_INPUT_DIM], Mode::Eval).unwrap();
        assert_eq!(z, vec![0.0, 0.0]);
        assert_eq!(softmax(&z), vec![0.5, 0.5]);
    }

    #[test]
    fn eval_is_pure_and_train_depends_on_seed() {
        let h = init_head(1, 1).unwrap();
        let x: Vec<f64> = (0..HEAD_INPUT_DIM).map(|i| (i % 7) as f64 / 7.0).collect();
        assert_eq!(forward(&h, &x, Mode::Eval).unwrap(), forward(&h, &x, Mode::Eval).unwrap());
        let t1 = forward(&h, &x, Mode::Train { dropout_seed: 3 }).unwrap();
        assert_eq!(t1, forward(&h, &x, Mode::Train { dropout_seed: 3 }).unwrap());
        assert_ne!(t1, forward(&h, &x, Mode::Train { dropout_seed: 4 }).unwrap());
    }

    #[test]
    fn dropout_mask_scales_kept_units() {
        let m = dropout_mask(10_000, 0.5, Mode::Train { dropout_seed: 9 });
        assert!(m.iter().all(|v| *v == 0.0 || *v == 2.0));
        let kept = m.iter().filter(|v| **v > 0.0).count();
        assert!((4_700..5_300).contains(&kept), "{kept}");
    }

    #[test]
    fn embedding_only_input_rejected() {
        let h = init_head(1, 1).unwrap();
        assert!(matches!(forward(&h, &[0.0; 1024], Mode::Eval), Err(Error::Domain(_))));
    }

    #[test]
    fn softmax_sums_to_one() {
        for z in [[-1.0, 2.0], [1e3, -1e3], [0.0, 0.0]] {
            let p = softmax(&z);
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert!((sigmoid(0.0) - 0.5).abs() < 1e-15);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let h = init_head_with_dims(5, 6, 4, 2).unwrap();
        let cfg = TrainConfig::default();
        let path = dir.path().join("model.json");
        h.save(&path, 5, &cfg).unwrap();
        let (back, back_cfg) = HeadParams::load(&path).unwrap();
        assert_eq!(back, h);
        assert_eq!(back_cfg, cfg);
    }
}

//! AdamW training and stratified cross-validation for the head.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::grad::{loss_and_grad, Example};
use super::policy::{decide, DecisionKind, DecisionPolicy};
use super::{init_head, init_head_with_dims, HeadParams, Mode};
use crate::error::{Error, Result};
use crate::features::Preprocess;
use crate::par::Parallelism;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub folds: usize,
    pub seed: u64,
    /// Execution only: results are identical either way, so it is not
    /// persisted with checkpoints.
    #[serde(skip)]
    pub parallelism: Parallelism,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 5e-5,
            batch_size: 8,
            epochs: 1,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
            folds: 5,
            seed: 42,
            parallelism: Parallelism::Sequential,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("learning_rate", self.learning_rate),
            ("eps", self.eps),
            ("batch_size", self.batch_size as f64),
            ("epochs", self.epochs as f64),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("train.{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::Config(format!("train.{name} must be in [0, 1), got {v}")));
            }
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::Config("train.weight_decay must be non-negative".into()));
        }
        if self.folds < 2 {
            return Err(Error::Config(format!("train.folds must be at least 2, got {}", self.folds)));
        }
        Ok(())
    }
}

/// Mutable training state: parameters plus AdamW moments.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub params: HeadParams,
    cfg: TrainConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl Trainer {
    pub fn new(params: HeadParams, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let n = params.num_params();
        Ok(Trainer {
            params,
            cfg,
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        })
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One AdamW update on `batch`; returns the batch loss before the update.
    pub fn step(&mut self, batch: &[&Example]) -> Result<f64> {
        let mode = Mode::Train {
            dropout_seed: rng::derive(self.cfg.seed, 0xd0_0000 + self.step),
        };
        let lg = loss_and_grad(&self.params, batch, mode, self.cfg.parallelism)?;
        self.step += 1;
        let c = &self.cfg;
        let t = self.step as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        let decay = 1.0 - c.learning_rate * c.weight_decay;
        for (((p, g), m), v) in self
            .params
            .flat_mut()
            .zip(lg.grad.flat())
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            *p *= decay;
            *m = c.beta1 * *m + (1.0 - c.beta1) * g;
            *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= c.learning_rate * m_hat / (v_hat.sqrt() + c.eps);
        }
        if !self.params.is_finite() {
            return Err(Error::Domain(format!("non-finite parameters after step {}", self.step)));
        }
        Ok(lg.loss)
    }

    /// One pass over `data` in a seeded shuffled order; returns batch losses.
    pub fn epoch(&mut self, data: &[Example], epoch: usize) -> Result<Vec<f64>> {
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut rng::rng(self.cfg.seed, 0x5401 + epoch as u64));
        let mut losses = Vec::with_capacity(order.len().div_ceil(self.cfg.batch_size));
        for chunk in order.chunks(self.cfg.batch_size) {
            let batch: Vec<&Example> = chunk.iter().map(|&i| &data[i]).collect();
            losses.push(self.step(&batch)?);
        }
        Ok(losses)
    }

    pub fn into_params(self) -> HeadParams {
        self.params
    }
}

fn check_classes(data: &[Example]) -> Result<()> {
    if data.len() < 2 {
        return Err(Error::Validation(format!(
            "training needs at least 2 examples, got {}",
            data.len()
        )));
    }
    if let Some(bad) = data.iter().find(|e| e.label > 1) {
        return Err(Error::Domain(format!("label must be 0 or 1, got {}", bad.label)));
    }
    let positives = data.iter().filter(|e| e.label == 1).count();
    if positives == 0 || positives == data.len() {
        return Err(Error::Validation(
            "training data must contain both classes".into(),
        ));
    }
    Ok(())
}

/// Train a fresh head on `data`. The input width is taken from the data.
pub fn train_head(data: &[Example], cfg: &TrainConfig, out_dim: usize) -> Result<HeadParams> {
    check_classes(data)?;
    let dim = data[0].x.len();
    if let Some(e) = data.iter().find(|e| e.x.len() != dim) {
        return Err(Error::Domain(format!(
            "inconsistent input lengths {dim} and {}",
            e.x.len()
        )));
    }
    let h = if dim == super::HEAD_INPUT_DIM {
        init_head(cfg.seed, out_dim)?
    } else {
        init_head_with_dims(cfg.seed, dim, super::HIDDEN_DIM, out_dim)?
    };
    let mut trainer = Trainer::new(h, cfg.clone())?;
    for epoch in 0..cfg.epochs {
        let losses = trainer.epoch(data, epoch)?;
        tracing::debug!(
            epoch,
            mean_loss = losses.iter().sum::<f64>() / losses.len() as f64,
            "epoch done"
        );
    }
    Ok(trainer.into_params())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Stratified, seeded fold assignment: `assign[i]` is the fold of example i.
pub fn stratified_folds(labels: &[u8], k: usize, seed: u64) -> Vec<usize> {
    let mut assign = vec![0; labels.len()];
    let mut next = 0;
    for class in [1u8, 0] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        idx.shuffle(&mut rng::rng(seed, 0xf01d + u64::from(class)));
        for i in idx {
            assign[i] = next % k;
            next += 1;
        }
    }
    assign
}

fn prf(pred: &[u8], gold: &[u8]) -> (f64, f64, f64) {
    let tp = pred.iter().zip(gold).filter(|(p, g)| **p == 1 && **g == 1).count() as f64;
    let fp = pred.iter().zip(gold).filter(|(p, g)| **p == 1 && **g == 0).count() as f64;
    let fn_ = pred.iter().zip(gold).filter(|(p, g)| **p == 0 && **g == 1).count() as f64;
    let p = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
    let r = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
    let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
    (p, r, f)
}

pub fn cross_validate(data: &[Example], cfg: &TrainConfig, out_dim: usize) -> Result<Vec<FoldResult>> {
    cfg.validate()?;
    if data.len() < cfg.folds {
        return Err(Error::Domain(format!(
            "{} examples cannot fill {} folds",
            data.len(),
            cfg.folds
        )));
    }
    let kind = match out_dim {
        1 => DecisionKind::RegressionThreshold,
        2 => DecisionKind::BinarySoftmax,
        _ => return Err(Error::Domain(format!("out_dim must be 1 or 2, got {out_dim}"))),
    };
    let policy = DecisionPolicy::new(kind, Preprocess::None);
    let labels: Vec<u8> = data.iter().map(|e| e.label).collect();
    let assign = stratified_folds(&labels, cfg.folds, cfg.seed);
    let mut out = Vec::with_capacity(cfg.folds);
    for fold in 0..cfg.folds {
        let train: Vec<Example> = (0..data.len())
            .filter(|&i| assign[i] != fold)
            .map(|i| data[i].clone())
            .collect();
        let test: Vec<&Example> = (0..data.len())
            .filter(|&i| assign[i] == fold)
            .map(|i| &data[i])
            .collect();
        let fold_cfg = TrainConfig {
            seed: rng::derive(cfg.seed, fold as u64),
            ..cfg.clone()
        };
        let h = train_head(&train, &fold_cfg, out_dim)?;
        let mut pred = Vec::with_capacity(test.len());
        for e in &test {
            pred.push(decide(&h, &e.x, &policy)?.label);
        }
        let gold: Vec<u8> = test.iter().map(|e| e.label).collect();
        let (precision, recall, f1) = prf(&pred, &gold);
        tracing::info!(fold, precision, recall, f1, "fold evaluated");
        out.push(FoldResult {
            fold,
            n_train: train.len(),
            n_test: test.len(),
            precision,
            recall,
            f1,
        });
    }
    Ok(out)
}

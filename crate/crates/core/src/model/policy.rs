//! Turning head outputs into per-user decisions for the three runs.

use serde::{Deserialize, Serialize};

use super::{forward, sigmoid, softmax, HeadParams, Mode};
use crate::error::{Error, Result};
use crate::features::Preprocess;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionKind {
    /// One output; sigmoid score thresholded.
    RegressionThreshold,
    /// Two outputs; softmax, argmax with ties going to the positive class.
    BinarySoftmax,
}

impl DecisionKind {
    pub fn out_dim(self) -> usize {
        match self {
            DecisionKind::RegressionThreshold => 1,
            DecisionKind::BinarySoftmax => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecisionPolicy {
    pub kind: DecisionKind,
    pub threshold: f64,
    pub preprocess: Preprocess,
}

impl DecisionPolicy {
    pub const THRESHOLD: f64 = 0.5;

    pub fn new(kind: DecisionKind, preprocess: Preprocess) -> Self {
        DecisionPolicy {
            kind,
            threshold: Self::THRESHOLD,
            preprocess,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind == DecisionKind::RegressionThreshold && self.threshold != Self::THRESHOLD {
            return Err(Error::Config(format!(
                "regression threshold is fixed at 0.5, got {}",
                self.threshold
            )));
        }
        Ok(())
    }
}

/// Task 1 run identifiers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum RunId {
    Run0,
    Run1,
    Run2,
}

impl RunId {
    pub const ALL: [RunId; 3] = [RunId::Run0, RunId::Run1, RunId::Run2];

    pub fn policy(self) -> DecisionPolicy {
        match self {
            RunId::Run0 => DecisionPolicy::new(DecisionKind::RegressionThreshold, Preprocess::None),
            RunId::Run1 => {
                DecisionPolicy::new(DecisionKind::RegressionThreshold, Preprocess::StripUrls)
            }
            RunId::Run2 => DecisionPolicy::new(DecisionKind::BinarySoftmax, Preprocess::None),
        }
    }

    pub fn out_dim(self) -> usize {
        self.policy().kind.out_dim()
    }
}

impl TryFrom<u8> for RunId {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        match v {
            0 => Ok(RunId::Run0),
            1 => Ok(RunId::Run1),
            2 => Ok(RunId::Run2),
            _ => Err(Error::Config(format!("run id must be 0, 1 or 2, got {v}"))),
        }
    }
}

impl From<RunId> for u8 {
    fn from(r: RunId) -> u8 {
        match r {
            RunId::Run0 => 0,
            RunId::Run1 => 1,
            RunId::Run2 => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub label: u8,
    pub score: f64,
}

/// Decision from raw logits.
pub fn decide_logits(logits: &[f64], policy: &DecisionPolicy) -> Result<Decision> {
    if logits.len() != policy.kind.out_dim() {
        return Err(Error::Config(format!(
            "{:?} policy needs {} output(s), head has {}",
            policy.kind,
            policy.kind.out_dim(),
            logits.len()
        )));
    }
    Ok(match policy.kind {
        DecisionKind::RegressionThreshold => {
            let score = sigmoid(logits[0]);
            Decision {
                label: u8::from(score >= policy.threshold),
                score,
            }
        }
        DecisionKind::BinarySoftmax => {
            let p = softmax(logits);
            Decision {
                label: u8::from(logits[1] >= logits[0]),
                score: p[1],
            }
        }
    })
}

pub fn decide(h: &HeadParams, x: &[f64], policy: &DecisionPolicy) -> Result<Decision> {
    if h.out_dim != policy.kind.out_dim() {
        return Err(Error::Config(format!(
            "{:?} policy needs {} output(s), head has {}",
            policy.kind,
            policy.kind.out_dim(),
            h.out_dim
        )));
    }
    decide_logits(&forward(h, x, Mode::Eval)?, policy)
}

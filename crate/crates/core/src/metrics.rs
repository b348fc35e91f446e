//! Evaluation measures: early-detection decision metrics, ranking metrics
//! and questionnaire metrics.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::edeq::{score_sheet, AnswerSheet, Questionnaire, SheetScores, Subscale};
use crate::error::{Error, Result};
use crate::stream::DecisionLog;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LatencyAggregate {
    #[default]
    Median,
    Mean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricConfig {
    pub erde_o: Vec<u32>,
    pub c_fn: f64,
    pub c_tp: f64,
    /// Cost of a false positive; `None` uses the positive prevalence.
    pub c_fp: Option<f64>,
    pub speed_p: f64,
    pub latency: LatencyAggregate,
    /// Ranking cut-offs.
    pub ks: Vec<usize>,
    /// Writing counts after which rankings are taken.
    pub ranking_after: Vec<usize>,
}

impl Default for MetricConfig {
    fn default() -> Self {
        MetricConfig {
            erde_o: vec![5, 50],
            c_fn: 1.0,
            c_tp: 1.0,
            c_fp: None,
            speed_p: 0.0078,
            latency: LatencyAggregate::Median,
            ks: vec![10, 100],
            ranking_after: vec![1, 100, 500, 1000],
        }
    }
}

impl MetricConfig {
    pub fn validate(&self) -> Result<()> {
        if self.erde_o.is_empty() || self.erde_o.contains(&0) {
            return Err(Error::Config("metrics.erde_o must be non-empty and positive".into()));
        }
        if let Some(c) = self.c_fp {
            if !(c > 0.0 && c < 1.0) {
                return Err(Error::Config(format!("metrics.c_fp must be in (0, 1), got {c}")));
            }
        }
        if !(self.speed_p > 0.0) || !(self.c_fn >= 0.0) || !(self.c_tp >= 0.0) {
            return Err(Error::Config("metrics costs must be non-negative, speed_p positive".into()));
        }
        if self.ks.contains(&0) {
            return Err(Error::Config("metrics.ks must be positive".into()));
        }
        Ok(())
    }
}

/// Latency cost factor for a true positive at writing `k`.
pub fn latency_cost(k: usize, o: u32) -> f64 {
    1.0 - 1.0 / (1.0 + (k as f64 - f64::from(o)).exp())
}

/// Speed penalty for a true positive at writing `k` (0 at k = 1).
pub fn speed_penalty(k: usize, p: f64) -> f64 {
    -1.0 + 2.0 / (1.0 + (-p * (k as f64 - 1.0)).exp())
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

fn aggregate(values: &mut [f64], how: LatencyAggregate) -> f64 {
    match how {
        LatencyAggregate::Median => median(values),
        LatencyAggregate::Mean => values.iter().sum::<f64>() / values.len() as f64,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionMetrics {
    pub subjects: usize,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
    #[serde(rename = "P")]
    pub precision: f64,
    #[serde(rename = "R")]
    pub recall: f64,
    #[serde(rename = "F1")]
    pub f1: f64,
    /// Keyed `ERDE_<o>`.
    pub erde: BTreeMap<String, f64>,
    /// `None` when there are no true positives.
    #[serde(rename = "latency_TP")]
    pub latency_tp: Option<f64>,
    pub speed: f64,
    #[serde(rename = "F_latency")]
    pub f_latency: f64,
}

impl DecisionMetrics {
    pub fn rows(&self) -> Vec<(String, f64)> {
        let mut rows = vec![
            ("P".to_string(), self.precision),
            ("R".to_string(), self.recall),
            ("F1".to_string(), self.f1),
        ];
        let mut erde: Vec<_> = self.erde.iter().collect();
        erde.sort_by_key(|(k, _)| k[5..].parse::<u32>().unwrap_or(u32::MAX));
        rows.extend(erde.into_iter().map(|(k, v)| (k.clone(), *v)));
        rows.push(("latency_TP".into(), self.latency_tp.unwrap_or(f64::NAN)));
        rows.push(("speed".into(), self.speed));
        rows.push(("F_latency".into(), self.f_latency));
        rows
    }
}

fn gold_of<'a>(gold: &'a BTreeMap<String, u8>, subject: &str) -> Result<&'a u8> {
    gold.get(subject)
        .ok_or_else(|| Error::Validation(format!("subject {subject} has no gold label")))
}

pub fn decision_metrics(
    log: &DecisionLog,
    gold: &BTreeMap<String, u8>,
    cfg: &MetricConfig,
) -> Result<DecisionMetrics> {
    cfg.validate()?;
    if log.is_empty() {
        return Err(Error::Validation("decision log is empty".into()));
    }
    let mut outcomes = Vec::with_capacity(log.len());
    for subject in log.subjects() {
        let truth = *gold_of(gold, subject)?;
        // alert at round r means r + 1 writings were read
        let alert = log.first_alert(subject).map(|r| r + 1);
        outcomes.push((truth, alert));
    }
    let n = outcomes.len();
    let positives = outcomes.iter().filter(|(g, _)| *g == 1).count();
    let c_fp = cfg.c_fp.unwrap_or(positives as f64 / n as f64);

    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    let mut tp_k = Vec::new();
    for (g, alert) in &outcomes {
        match (g, alert) {
            (1, Some(k)) => {
                tp += 1;
                tp_k.push(*k);
            }
            (_, Some(_)) => fp += 1,
            (1, None) => fn_ += 1,
            _ => tn += 1,
        }
    }
    let mut erde = BTreeMap::new();
    for &o in &cfg.erde_o {
        let total: f64 = outcomes
            .iter()
            .map(|(g, alert)| match (g, alert) {
                (1, Some(k)) => cfg.c_tp * latency_cost(*k, o),
                (_, Some(_)) => c_fp,
                (1, None) => cfg.c_fn,
                _ => 0.0,
            })
            .sum();
        erde.insert(format!("ERDE_{o}"), total / n as f64);
    }
    let precision = if tp + fp > 0 { tp as f64 / (tp + fp) as f64 } else { 0.0 };
    let recall = if tp + fn_ > 0 { tp as f64 / (tp + fn_) as f64 } else { 0.0 };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    let (latency_tp, speed) = if tp_k.is_empty() {
        (None, 0.0)
    } else {
        let mut ks: Vec<f64> = tp_k.iter().map(|k| *k as f64).collect();
        let mut penalties: Vec<f64> = tp_k.iter().map(|k| speed_penalty(*k, cfg.speed_p)).collect();
        (
            Some(aggregate(&mut ks, cfg.latency)),
            1.0 - aggregate(&mut penalties, cfg.latency),
        )
    };
    Ok(DecisionMetrics {
        subjects: n,
        tp,
        fp,
        fn_,
        tn,
        precision,
        recall,
        f1,
        erde,
        latency_tp,
        speed,
        f_latency: f1 * speed,
    })
}

/// Each subject's most recent score among the first `writings` rounds.
pub fn scores_after(log: &DecisionLog, writings: usize) -> BTreeMap<String, f64> {
    log.subjects()
        .filter_map(|s| {
            log.entries(s)
                .iter()
                .take_while(|e| e.round < writings)
                .last()
                .map(|e| (s.to_string(), e.score))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingAtK {
    pub k: usize,
    #[serde(rename = "P@k")]
    pub precision: f64,
    #[serde(rename = "NDCG@k")]
    pub ndcg: f64,
    /// Fewer than k subjects were available.
    pub truncated: bool,
    /// No relevant subject among the scored ones.
    pub no_relevant: bool,
}

/// Subjects sorted by descending score, ties by ascending subject id.
pub fn rank(scores: &BTreeMap<String, f64>) -> Vec<(&str, f64)> {
    let mut ranked: Vec<(&str, f64)> = scores.iter().map(|(s, v)| (s.as_str(), *v)).collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked
}

pub fn ranking_metrics(
    scores: &BTreeMap<String, f64>,
    gold: &BTreeMap<String, u8>,
    ks: &[usize],
) -> Result<Vec<RankingAtK>> {
    if scores.is_empty() {
        return Err(Error::Validation("no scores to rank".into()));
    }
    let ranked = rank(scores);
    let rel: Vec<f64> = ranked
        .iter()
        .map(|(s, _)| gold_of(gold, s).map(|g| f64::from(*g)))
        .collect::<Result<_>>()?;
    let relevant = rel.iter().filter(|r| **r > 0.0).count();
    let discount = |i: usize| 1.0 / ((i + 2) as f64).log2();
    let mut out = Vec::with_capacity(ks.len());
    for &k in ks {
        if k == 0 {
            return Err(Error::Domain("ranking cut-off must be positive".into()));
        }
        let depth = k.min(rel.len());
        let hits: f64 = rel[..depth].iter().sum();
        let dcg: f64 = rel[..depth].iter().enumerate().map(|(i, r)| r * discount(i)).sum();
        let idcg: f64 = (0..depth.min(relevant)).map(discount).sum();
        out.push(RankingAtK {
            k,
            precision: hits / depth as f64,
            ndcg: if idcg > 0.0 { dcg / idcg } else { 0.0 },
            truncated: depth < k,
            no_relevant: relevant == 0,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionnaireMetrics {
    #[serde(rename = "MZOE")]
    pub mzoe: f64,
    #[serde(rename = "MAE")]
    pub mae: f64,
    #[serde(rename = "MAE_macro")]
    pub mae_macro: f64,
    #[serde(rename = "GED")]
    pub ged: f64,
    #[serde(rename = "RS")]
    pub rs: f64,
    #[serde(rename = "ECS")]
    pub ecs: f64,
    #[serde(rename = "SCS")]
    pub scs: f64,
    #[serde(rename = "WCS")]
    pub wcs: f64,
}

impl QuestionnaireMetrics {
    pub fn rows(&self) -> Vec<(String, f64)> {
        [
            ("MZOE", self.mzoe),
            ("MAE", self.mae),
            ("MAE_macro", self.mae_macro),
            ("GED", self.ged),
            ("RS", self.rs),
            ("ECS", self.ecs),
            ("SCS", self.scs),
            ("WCS", self.wcs),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }
}

pub fn questionnaire_metrics(
    pred: &BTreeMap<String, AnswerSheet>,
    gold: &BTreeMap<String, AnswerSheet>,
    q: &Questionnaire,
) -> Result<QuestionnaireMetrics> {
    if pred.is_empty() {
        return Err(Error::Validation("no answer sheets to evaluate".into()));
    }
    if !pred.keys().eq(gold.keys()) {
        let missing: Vec<&String> = gold.keys().filter(|k| !pred.contains_key(*k)).collect();
        let extra: Vec<&String> = pred.keys().filter(|k| !gold.contains_key(*k)).collect();
        return Err(Error::Validation(format!(
            "prediction and gold users differ (missing {missing:?}, unexpected {extra:?})"
        )));
    }
    let mut wrong = 0usize;
    let mut abs_sum = 0.0;
    let mut pairs = 0usize;
    let mut per_class = [(0.0f64, 0usize); 7];
    let mut score_err = [0.0f64; 5];
    for (user, p) in pred {
        let g = &gold[user];
        p.validate()?;
        g.validate()?;
        for (a, b) in p.answers.iter().zip(&g.answers) {
            let err = f64::from(a.abs_diff(*b));
            wrong += usize::from(a != b);
            abs_sum += err;
            pairs += 1;
            per_class[*b as usize].0 += err;
            per_class[*b as usize].1 += 1;
        }
        let (ps, gs): (SheetScores, SheetScores) = (score_sheet(p, q)?, score_sheet(g, q)?);
        score_err[0] += (ps.global - gs.global).abs();
        for (i, s) in Subscale::ALL.iter().enumerate() {
            score_err[i + 1] += (ps.subscale(*s) - gs.subscale(*s)).abs();
        }
    }
    let classes: Vec<f64> = per_class
        .iter()
        .filter(|(_, n)| *n > 0)
        .map(|(sum, n)| sum / *n as f64)
        .collect();
    let users = pred.len() as f64;
    Ok(QuestionnaireMetrics {
        mzoe: wrong as f64 / pairs as f64,
        mae: abs_sum / pairs as f64,
        mae_macro: classes.iter().sum::<f64>() / classes.len() as f64,
        ged: score_err[0] / users,
        rs: score_err[1] / users,
        ecs: score_err[2] / users,
        scs: score_err[3] / users,
        wcs: score_err[4] / users,
    })
}

/// Two aligned columns: metric name, value with three decimals.
pub fn format_table(title: &str, rows: &[(String, f64)]) -> String {
    let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0).max(6);
    let mut out = String::new();
    writeln!(out, "{title}").unwrap();
    writeln!(out, "{:<width$}  {:>8}", "metric", "value").unwrap();
    writeln!(out, "{}  {}", "-".repeat(width), "-".repeat(8)).unwrap();
    for (k, v) in rows {
        if v.is_nan() {
            writeln!(out, "{k:<width$}  {:>8}", "n/a").unwrap();
        } else {
            writeln!(out, "{k:<width$}  {v:>8.3}").unwrap();
        }
    }
    out
}

pub fn ranking_rows(after: usize, rows: &[RankingAtK]) -> Vec<(String, f64)> {
    rows.iter()
        .flat_map(|r| {
            [
                (format!("P@{} ({after} writings)", r.k), r.precision),
                (format!("NDCG@{} ({after} writings)", r.k), r.ndcg),
            ]
        })
        .collect()
}

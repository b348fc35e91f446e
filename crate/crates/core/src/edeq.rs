//! EDE-Q: questionnaire definition, similarity-based answering, scoring.
//!
//! Day-based items are answered from the span between the first and last
//! post that resembles the item text; scale-based items from the single
//! most similar post.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::corpus::{select_last_days, Post, PostWindow, UserHistory};
use crate::embed::{cosine_slices, Document, Embedding, EmbeddingProvider};
use crate::error::{Error, Result};
use crate::par::{self, Parallelism};

pub const ITEM_COUNT: usize = 22;
pub const MAX_ANSWER: u8 = 6;

const BUNDLED: &str = include_str!("../data/edeq_questionnaire.json");

const RS_ITEMS: [u8; 5] = [1, 2, 3, 4, 5];
const SCS_ITEMS: [u8; 8] = [6, 8, 10, 11, 23, 26, 27, 28];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Subscale {
    #[serde(rename = "RS")]
    Restraint,
    #[serde(rename = "ECS")]
    EatingConcern,
    #[serde(rename = "SCS")]
    ShapeConcern,
    #[serde(rename = "WCS")]
    WeightConcern,
}

impl Subscale {
    pub const ALL: [Subscale; 4] = [
        Subscale::Restraint,
        Subscale::EatingConcern,
        Subscale::ShapeConcern,
        Subscale::WeightConcern,
    ];

    pub fn code(self) -> &'static str {
        match self {
            Subscale::Restraint => "RS",
            Subscale::EatingConcern => "ECS",
            Subscale::ShapeConcern => "SCS",
            Subscale::WeightConcern => "WCS",
        }
    }
}

impl fmt::Display for Subscale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemKind {
    DayBased,
    ScaleBased,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Item {
    pub number: u8,
    pub text: String,
    pub kind: ItemKind,
    #[serde(default)]
    pub subscales: Vec<Subscale>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Questionnaire {
    pub items: Vec<Item>,
}

fn expected_numbers() -> BTreeSet<u8> {
    (1..=12).chain(19..=28).collect()
}

impl Questionnaire {
    pub fn bundled() -> Self {
        Self::from_json(BUNDLED).expect("bundled questionnaire is valid")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let items: Vec<Item> = serde_json::from_str(text)?;
        Self::new(items)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
            .map_err(|e| Error::Validation(format!("{}: {e}", path.display())))
    }

    /// Validates and sorts items by number.
    pub fn new(mut items: Vec<Item>) -> Result<Self> {
        if items.len() != ITEM_COUNT {
            return Err(Error::Validation(format!(
                "questionnaire needs {ITEM_COUNT} items, found {}",
                items.len()
            )));
        }
        items.sort_by_key(|i| i.number);
        let numbers: BTreeSet<u8> = items.iter().map(|i| i.number).collect();
        if numbers != expected_numbers() {
            return Err(Error::Validation(
                "item numbers must be exactly 1-12 and 19-28".into(),
            ));
        }
        if let Some(i) = items.iter().find(|i| i.text.trim().is_empty()) {
            return Err(Error::Validation(format!("item {} has no text", i.number)));
        }
        let q = Questionnaire { items };
        for (sub, required) in [
            (Subscale::Restraint, &RS_ITEMS[..]),
            (Subscale::ShapeConcern, &SCS_ITEMS[..]),
        ] {
            let found = q.subscale_items(sub);
            if found != required {
                return Err(Error::Validation(format!(
                    "{sub} must contain items {required:?}, found {found:?}"
                )));
            }
        }
        for sub in Subscale::ALL {
            if q.subscale_items(sub).is_empty() {
                return Err(Error::Validation(format!("{sub} has no items")));
            }
        }
        Ok(q)
    }

    /// Item numbers of a subscale, ascending.
    pub fn subscale_items(&self, sub: Subscale) -> Vec<u8> {
        self.items
            .iter()
            .filter(|i| i.subscales.contains(&sub))
            .map(|i| i.number)
            .collect()
    }

    fn position(&self, number: u8) -> usize {
        self.items
            .iter()
            .position(|i| i.number == number)
            .expect("validated item number")
    }

    pub fn embed_items(&self, provider: &dyn EmbeddingProvider) -> Result<Vec<Embedding>> {
        let docs: Vec<Document> = self
            .items
            .iter()
            .map(|i| Document::new(format!("edeq-item-{}", i.number), i.text.clone()))
            .collect();
        provider.embed_batch(&docs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EdeqConfig {
    pub day_threshold: f64,
    pub window_days: u32,
    pub inclusive_span: bool,
}

impl Default for EdeqConfig {
    fn default() -> Self {
        EdeqConfig::for_run(EdeqRun::Run1)
    }
}

/// Task 3 runs differ only in the day-based similarity threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum EdeqRun {
    Run1,
    Run2,
    Run3,
}

impl EdeqRun {
    pub fn threshold(self) -> f64 {
        match self {
            EdeqRun::Run1 => 0.4,
            EdeqRun::Run2 => 0.35,
            EdeqRun::Run3 => 0.375,
        }
    }
}

impl TryFrom<u8> for EdeqRun {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        match v {
            1 => Ok(EdeqRun::Run1),
            2 => Ok(EdeqRun::Run2),
            3 => Ok(EdeqRun::Run3),
            _ => Err(Error::Config(format!("edeq run must be 1, 2 or 3, got {v}"))),
        }
    }
}

impl From<EdeqRun> for u8 {
    fn from(r: EdeqRun) -> u8 {
        match r {
            EdeqRun::Run1 => 1,
            EdeqRun::Run2 => 2,
            EdeqRun::Run3 => 3,
        }
    }
}

impl EdeqConfig {
    pub fn for_run(run: EdeqRun) -> Self {
        EdeqConfig {
            day_threshold: run.threshold(),
            window_days: 28,
            inclusive_span: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.day_threshold > 0.0 && self.day_threshold < 1.0) {
            return Err(Error::Config(format!(
                "edeq.day_threshold must be in (0, 1), got {}",
                self.day_threshold
            )));
        }
        if self.window_days == 0 {
            return Err(Error::Config("edeq.window_days must be positive".into()));
        }
        Ok(())
    }
}

/// Day count to answer: 0, 1-5, 6-12, 13-15, 16-22, 23-27, 28+.
pub fn day_bucket(days: i64) -> u8 {
    match days {
        i64::MIN..=0 => 0,
        1..=5 => 1,
        6..=12 => 2,
        13..=15 => 3,
        16..=22 => 4,
        23..=27 => 5,
        _ => 6,
    }
}

/// Similarity to answer over [0,.1), [.1,.2), ... [.5,.6), [.6,1].
pub fn scale_bucket(similarity: f64) -> u8 {
    let m = similarity.clamp(0.0, 1.0);
    // compare against literal bounds so 0.3 lands in [0.3, 0.4)
    const BOUNDS: [f64; 6] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6];
    BOUNDS.iter().take_while(|b| m >= **b).count() as u8
}

/// Cosine clamped to [0, 1]; degenerate vectors count as dissimilar.
fn similarity(a: &Embedding, b: &Embedding) -> Result<f64> {
    if a.degenerate || b.degenerate {
        return Ok(0.0);
    }
    match cosine_slices(&a.vector, &b.vector) {
        Ok(c) => Ok(c.max(0.0)),
        Err(Error::Domain(_)) if a.vector.len() == b.vector.len() => Ok(0.0),
        Err(e) => Err(e),
    }
}

/// Indices of posts whose similarity strictly exceeds `threshold`.
pub fn qualifying_posts(sims: &[f64], threshold: f64) -> Vec<usize> {
    sims.iter()
        .enumerate()
        .filter(|(_, s)| **s > threshold)
        .map(|(i, _)| i)
        .collect()
}

fn day_answer(posts: &[Post], sims: &[f64], cfg: &EdeqConfig) -> u8 {
    let dates: Vec<DateTime<Utc>> = qualifying_posts(sims, cfg.day_threshold)
        .into_iter()
        .map(|i| posts[i].date)
        .collect();
    let (Some(first), Some(last)) = (dates.iter().min(), dates.iter().max()) else {
        return 0;
    };
    let mut days = (last.date_naive() - first.date_naive()).num_days();
    if cfg.inclusive_span {
        days += 1;
    }
    day_bucket(days)
}

fn scale_answer(sims: &[f64]) -> u8 {
    if sims.is_empty() {
        return 0;
    }
    scale_bucket(sims.iter().cloned().fold(0.0, f64::max))
}

pub fn post_document(subject_id: &str, post: &Post) -> Document {
    Document::new(format!("{subject_id}#{}", post.round_index), post.full_text())
}

fn window_embeddings(window: &PostWindow, provider: &dyn EmbeddingProvider) -> Result<Vec<Embedding>> {
    if window.posts.is_empty() {
        return Ok(Vec::new());
    }
    let docs: Vec<Document> = window
        .posts
        .iter()
        .map(|p| post_document(&window.subject_id, p))
        .collect();
    provider.embed_batch(&docs)
}

fn item_sims(posts: &[Embedding], item: &Embedding) -> Result<Vec<f64>> {
    posts.iter().map(|p| similarity(p, item)).collect()
}

fn item_embedding(item: &Item, provider: &dyn EmbeddingProvider) -> Result<Embedding> {
    provider.embed(&Document::new(format!("edeq-item-{}", item.number), item.text.clone()))
}

/// Clamped cosine between every post in the window and the item text.
pub fn item_similarities(
    window: &PostWindow,
    item: &Item,
    provider: &dyn EmbeddingProvider,
) -> Result<Vec<f64>> {
    let posts = window_embeddings(window, provider)?;
    if posts.is_empty() {
        return Ok(Vec::new());
    }
    item_sims(&posts, &item_embedding(item, provider)?)
}

pub fn answer_day_question(
    window: &PostWindow,
    item: &Item,
    cfg: &EdeqConfig,
    provider: &dyn EmbeddingProvider,
) -> Result<u8> {
    if item.kind != ItemKind::DayBased {
        return Err(Error::Domain(format!("item {} is not day-based", item.number)));
    }
    let posts = window_embeddings(window, provider)?;
    if posts.is_empty() {
        return Ok(0);
    }
    let sims = item_sims(&posts, &item_embedding(item, provider)?)?;
    Ok(day_answer(&window.posts, &sims, cfg))
}

pub fn answer_scale_question(
    window: &PostWindow,
    item: &Item,
    provider: &dyn EmbeddingProvider,
) -> Result<u8> {
    if item.kind != ItemKind::ScaleBased {
        return Err(Error::Domain(format!("item {} is not scale-based", item.number)));
    }
    let posts = window_embeddings(window, provider)?;
    if posts.is_empty() {
        return Ok(0);
    }
    let sims = item_sims(&posts, &item_embedding(item, provider)?)?;
    Ok(scale_answer(&sims))
}

/// Answers in questionnaire item order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerSheet {
    pub answers: Vec<u8>,
}

impl AnswerSheet {
    pub fn zeros() -> Self {
        AnswerSheet {
            answers: vec![0; ITEM_COUNT],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.answers.len() != ITEM_COUNT {
            return Err(Error::Validation(format!(
                "answer sheet needs {ITEM_COUNT} answers, found {}",
                self.answers.len()
            )));
        }
        if let Some(a) = self.answers.iter().find(|a| **a > MAX_ANSWER) {
            return Err(Error::Validation(format!("answer {a} outside 0..=6")));
        }
        Ok(())
    }
}

/// Fill one user's sheet from the last `window_days` of their history,
/// using precomputed item embeddings (see [`Questionnaire::embed_items`]).
pub fn fill_with_items(
    history: &UserHistory,
    q: &Questionnaire,
    items: &[Embedding],
    cfg: &EdeqConfig,
    provider: &dyn EmbeddingProvider,
) -> Result<AnswerSheet> {
    cfg.validate()?;
    let window = select_last_days(history, cfg.window_days, None)?;
    let posts = window_embeddings(&window, provider)?;
    let mut answers = Vec::with_capacity(ITEM_COUNT);
    for (item, emb) in q.items.iter().zip(items) {
        let sims = item_sims(&posts, emb)?;
        answers.push(match item.kind {
            ItemKind::DayBased => day_answer(&window.posts, &sims, cfg),
            ItemKind::ScaleBased => scale_answer(&sims),
        });
    }
    Ok(AnswerSheet { answers })
}

pub fn fill_questionnaire(
    history: &UserHistory,
    q: &Questionnaire,
    cfg: &EdeqConfig,
    provider: &dyn EmbeddingProvider,
) -> Result<AnswerSheet> {
    let items = q.embed_items(provider)?;
    fill_with_items(history, q, &items, cfg, provider)
}

/// Fill every user; output keyed (and therefore ordered) by subject id.
pub fn fill_all(
    histories: &[UserHistory],
    q: &Questionnaire,
    cfg: &EdeqConfig,
    provider: &dyn EmbeddingProvider,
    parallelism: Parallelism,
) -> Result<BTreeMap<String, AnswerSheet>> {
    let items = q.embed_items(provider)?;
    let sheets = par::try_map(parallelism, histories, |h| {
        fill_with_items(h, q, &items, cfg, provider)
    })?;
    Ok(histories
        .iter()
        .map(|h| h.subject_id.clone())
        .zip(sheets)
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SheetScores {
    #[serde(rename = "RS")]
    pub rs: f64,
    #[serde(rename = "ECS")]
    pub ecs: f64,
    #[serde(rename = "SCS")]
    pub scs: f64,
    #[serde(rename = "WCS")]
    pub wcs: f64,
    pub global: f64,
}

impl SheetScores {
    pub fn subscale(&self, s: Subscale) -> f64 {
        match s {
            Subscale::Restraint => self.rs,
            Subscale::EatingConcern => self.ecs,
            Subscale::ShapeConcern => self.scs,
            Subscale::WeightConcern => self.wcs,
        }
    }
}

pub fn score_sheet(sheet: &AnswerSheet, q: &Questionnaire) -> Result<SheetScores> {
    sheet.validate()?;
    let mean = |s: Subscale| {
        let members = q.subscale_items(s);
        let sum: f64 = members
            .iter()
            .map(|n| f64::from(sheet.answers[q.position(*n)]))
            .sum();
        sum / members.len() as f64
    };
    let (rs, ecs, scs, wcs) = (
        mean(Subscale::Restraint),
        mean(Subscale::EatingConcern),
        mean(Subscale::ShapeConcern),
        mean(Subscale::WeightConcern),
    );
    Ok(SheetScores {
        rs,
        ecs,
        scs,
        wcs,
        global: (rs + ecs + scs + wcs) / 4.0,
    })
}

/// One line per user: `user_id a1 a2 ... a22`.
pub fn write_answers(path: impl AsRef<Path>, sheets: &BTreeMap<String, AnswerSheet>) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for (user, sheet) in sheets {
        write!(out, "{user}").expect("write to vec");
        for a in &sheet.answers {
            write!(out, " {a}").expect("write to vec");
        }
        out.push(b'\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn parse_answers(text: &str) -> Result<BTreeMap<String, AnswerSheet>> {
    let mut sheets = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        let user = fields.next().expect("non-empty line").to_string();
        let answers = fields
            .map(|f| {
                f.parse::<u8>().map_err(|_| Error::Parse {
                    line: i + 1,
                    message: format!("answer {f:?} is not an integer"),
                })
            })
            .collect::<Result<Vec<u8>>>()?;
        let sheet = AnswerSheet { answers };
        sheet.validate().map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        if sheets.insert(user.clone(), sheet).is_some() {
            return Err(Error::Validation(format!("duplicate user {user} in answers")));
        }
    }
    Ok(sheets)
}

pub fn read_answers(path: impl AsRef<Path>) -> Result<BTreeMap<String, AnswerSheet>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_answers(&text)
}

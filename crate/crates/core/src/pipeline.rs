//! End-to-end experiments: Task 1 (featurize, train, stream, evaluate) and
//! Task 3 (fill and score the questionnaire), with artifact manifests.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{
    gold_labels, ingest_erisk_xml, ingest_jsonl, parse_timestamp, read_golden_truth, select_last_n,
    Label, Post, PostWindow, Selection, UserHistory,
};
use crate::edeq::{
    fill_all, read_answers, score_sheet, write_answers, EdeqConfig, EdeqRun, Questionnaire,
    SheetScores,
};
use crate::embed::{Document, Embedding, EmbeddingConfig, EmbeddingProvider};
use crate::emotion::{EmotionConfig, EmotionProvider};
use crate::error::{Error, Result};
use crate::features::{
    concat_window, fit_scaler, write_feature_csv, FeatureExtractor, FeatureVector, Preprocess,
    Scaler,
};
use crate::metrics::{
    decision_metrics, format_table, questionnaire_metrics, ranking_metrics, ranking_rows,
    scores_after, DecisionMetrics, MetricConfig, QuestionnaireMetrics, RankingAtK,
};
use crate::model::{
    cross_validate, decide, train_head, DecisionPolicy, Example, FoldResult, HeadParams, RunId,
    TrainConfig, HEAD_INPUT_DIM,
};
use crate::par::{self, Parallelism};
use crate::stream::{
    run_client, spawn_http, DecisionLog, DecisionMsg, HttpTransport, InProcess, StreamServer,
    Writing,
};

pub const WINDOW_POSTS: usize = 50;
pub const TEAM_TOKEN: &str = "earlyrisk";

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    /// Labelled training histories (Task 1).
    pub train: Option<PathBuf>,
    /// Histories to stream (Task 1) or to answer for (Task 3).
    pub test: Option<PathBuf>,
    /// Task 1: golden-truth labels for `test`. Task 3: gold answer sheets.
    pub gold: Option<PathBuf>,
    /// Task 3 questionnaire definition; the bundled one if absent.
    pub questionnaire: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransportKind {
    /// Loopback HTTP against a server started for the run.
    #[default]
    Http,
    InProcess,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub task: u8,
    /// Task 1: 0, 1 or 2. Task 3: 1, 2 or 3.
    pub id: u8,
    pub seed: u64,
    pub output: PathBuf,
    pub window: usize,
    /// Must agree with the run when given.
    pub preprocess: Option<Preprocess>,
    pub embedding: EmbeddingConfig,
    pub emotions: EmotionConfig,
    pub transport: TransportKind,
    pub parallelism: Parallelism,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            task: 1,
            id: 2,
            seed: 42,
            output: PathBuf::from("out"),
            window: WINDOW_POSTS,
            preprocess: None,
            embedding: EmbeddingConfig::default(),
            emotions: EmotionConfig::default(),
            transport: TransportKind::default(),
            parallelism: Parallelism::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EdeqSection {
    /// Overrides the run's threshold when set.
    pub day_threshold: Option<f64>,
    pub window_days: u32,
    pub inclusive_span: bool,
}

impl Default for EdeqSection {
    fn default() -> Self {
        EdeqSection {
            day_threshold: None,
            window_days: 28,
            inclusive_span: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub corpus: CorpusConfig,
    pub run: RunConfig,
    pub train: TrainConfig,
    pub metrics: MetricConfig,
    pub edeq: EdeqSection,
}

fn require_path(p: &Option<PathBuf>, key: &str) -> Result<PathBuf> {
    let p = p
        .clone()
        .ok_or_else(|| Error::Validation(format!("corpus.{key} is required")))?;
    if !p.exists() {
        return Err(Error::Validation(format!(
            "corpus.{key} {} does not exist",
            p.display()
        )));
    }
    Ok(p)
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn run_id(&self) -> Result<RunId> {
        RunId::try_from(self.run.id)
    }

    pub fn edeq_run(&self) -> Result<EdeqRun> {
        EdeqRun::try_from(self.run.id)
    }

    /// The training config actually used: the run seed wins.
    pub fn effective_train(&self) -> TrainConfig {
        TrainConfig {
            seed: self.run.seed,
            parallelism: self.run.parallelism,
            ..self.train.clone()
        }
    }

    pub fn edeq_config(&self) -> Result<EdeqConfig> {
        let base = EdeqConfig::for_run(self.edeq_run()?);
        let cfg = EdeqConfig {
            day_threshold: self.edeq.day_threshold.unwrap_or(base.day_threshold),
            window_days: self.edeq.window_days,
            inclusive_span: self.edeq.inclusive_span,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks that run before any work starts.
    pub fn validate(&self) -> Result<()> {
        if self.run.window == 0 {
            return Err(Error::Config("run.window must be positive".into()));
        }
        match self.run.task {
            1 => {
                let run = self.run_id().map_err(|e| Error::Validation(e.to_string()))?;
                if let Some(p) = self.run.preprocess {
                    if p != run.policy().preprocess {
                        return Err(Error::Validation(format!(
                            "run {} implies preprocess {:?}, config says {p:?}",
                            self.run.id,
                            run.policy().preprocess
                        )));
                    }
                }
                require_path(&self.corpus.train, "train")?;
                require_path(&self.corpus.test, "test")?;
                if self.corpus.gold.is_some() {
                    require_path(&self.corpus.gold, "gold")?;
                }
                self.effective_train()
                    .validate()
                    .map_err(|e| Error::Validation(e.to_string()))?;
                self.metrics
                    .validate()
                    .map_err(|e| Error::Validation(e.to_string()))?;
            }
            3 => {
                self.edeq_config()
                    .map_err(|e| Error::Validation(e.to_string()))?;
                require_path(&self.corpus.test, "test")?;
                for (key, p) in [("gold", &self.corpus.gold), ("questionnaire", &self.corpus.questionnaire)] {
                    if p.is_some() {
                        require_path(p, key)?;
                    }
                }
            }
            t => return Err(Error::Validation(format!("run.task must be 1 or 3, got {t}"))),
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

/// JSONL file or eRisk XML directory.
pub fn load_corpus(path: &Path) -> Result<Vec<UserHistory>> {
    if path.is_dir() {
        ingest_erisk_xml(path, None)
    } else {
        ingest_jsonl(path)
    }
}

pub fn file_sha256(path: &Path) -> Result<String> {
    if path.is_dir() {
        let mut entries: Vec<PathBuf> = fs::read_dir(path)
            .map_err(|e| Error::io(path, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .collect();
        entries.sort();
        let mut h = Sha256::new();
        for e in entries {
            h.update(e.file_name().unwrap_or_default().as_encoded_bytes());
            h.update(file_sha256(&e)?.as_bytes());
        }
        return Ok(hex::encode(h.finalize()));
    }
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(bytes)))
}

/// Turns post windows into (raw features, embedding) pairs.
pub struct Featurizer {
    pub extractor: FeatureExtractor,
    pub embedder: Box<dyn EmbeddingProvider>,
    pub emotions: Box<dyn EmotionProvider>,
    pub preprocess: Preprocess,
    pub parallelism: Parallelism,
}

impl Featurizer {
    pub fn from_config(run: &RunConfig, preprocess: Preprocess) -> Result<Self> {
        Ok(Featurizer {
            extractor: FeatureExtractor::default(),
            embedder: run.embedding.build()?,
            emotions: run.emotions.build()?,
            preprocess,
            parallelism: run.parallelism,
        })
    }

    /// `items` pairs a cache key with a window.
    pub fn featurize(&self, items: &[(String, &PostWindow)]) -> Result<Vec<(FeatureVector, Embedding)>> {
        if items.is_empty() {
            return Ok(Vec::new());
        }
        let docs: Vec<Document> = items
            .iter()
            .map(|(id, w)| Document::new(id.clone(), concat_window(w, self.preprocess)))
            .collect();
        let emotions = self.emotions.score_batch(&docs)?;
        let embeddings = self.embedder.embed_batch(&docs)?;
        let jobs: Vec<(&Document, _)> = docs.iter().zip(emotions).collect();
        let features = par::try_map(self.parallelism, &jobs, |(doc, emo)| {
            self.extractor.extract(&doc.text, emo.clone())
        })?;
        Ok(features.into_iter().zip(embeddings).collect())
    }
}

fn head_input(embedding: &Embedding, scaled: &FeatureVector) -> Vec<f64> {
    let mut x = Vec::with_capacity(embedding.dim() + scaled.len());
    x.extend_from_slice(&embedding.vector);
    x.extend_from_slice(&scaled.values);
    x
}

/// A trained Task 1 system ready to score windows.
pub struct Task1Model {
    pub featurizer: Featurizer,
    pub scaler: Scaler,
    pub head: HeadParams,
    pub policy: DecisionPolicy,
    pub window: usize,
}

impl Task1Model {
    /// Rebuild from a directory holding model.json and scaler.json.
    pub fn load(cfg: &ExperimentConfig, dir: &Path) -> Result<Self> {
        let policy = cfg.run_id()?.policy();
        let (head, _) = HeadParams::load(dir.join("model.json"))?;
        if head.out_dim != policy.kind.out_dim() {
            return Err(Error::Config(format!(
                "run {} needs a head with {} output(s), model.json has {}",
                cfg.run.id,
                policy.kind.out_dim(),
                head.out_dim
            )));
        }
        Ok(Task1Model {
            featurizer: Featurizer::from_config(&cfg.run, policy.preprocess)?,
            scaler: Scaler::load(dir.join("scaler.json"))?,
            head,
            policy,
            window: cfg.run.window,
        })
    }

    pub fn predict(&self, items: &[(String, &PostWindow)]) -> Result<Vec<crate::model::Decision>> {
        let feats = self.featurizer.featurize(items)?;
        feats
            .iter()
            .map(|(f, e)| decide(&self.head, &head_input(e, &self.scaler.apply(f)?), &self.policy))
            .collect()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainReport {
    pub cross_validation: Vec<FoldResult>,
    pub mean_f1: f64,
}

/// Featurize training histories, fit the scaler, report k-fold CV and fit
/// the final head. Writes features.csv, scaler.json, model.json, cv.json.
pub fn train_stage(
    cfg: &ExperimentConfig,
    histories: &[UserHistory],
    out: &Path,
) -> Result<(Task1Model, TrainReport)> {
    let run = cfg.run_id()?;
    let policy = run.policy();
    let train_cfg = cfg.effective_train();
    let featurizer = Featurizer::from_config(&cfg.run, policy.preprocess)?;

    let labelled: Vec<&UserHistory> = histories
        .iter()
        .filter(|h| h.label != Label::Unknown)
        .collect();
    if labelled.len() != histories.len() {
        return Err(Error::Validation(format!(
            "{} training subjects have no label",
            histories.len() - labelled.len()
        )));
    }
    let windows = histories
        .iter()
        .map(|h| select_last_n(h, cfg.run.window))
        .collect::<Result<Vec<_>>>()?;
    let items: Vec<(String, &PostWindow)> = windows
        .iter()
        .map(|w| (w.subject_id.clone(), w))
        .collect();
    let feats = featurizer.featurize(&items)?;
    let raw: Vec<FeatureVector> = feats.iter().map(|(f, _)| f.clone()).collect();
    let rows: Vec<(String, FeatureVector)> = items
        .iter()
        .map(|(id, _)| id.clone())
        .zip(raw.iter().cloned())
        .collect();
    write_feature_csv(out.join("features.csv"), &rows)?;
    let scaler = fit_scaler(&raw)?;
    scaler.save(out.join("scaler.json"))?;

    let examples = feats
        .iter()
        .zip(histories)
        .map(|((f, e), h)| {
            Ok(Example::new(
                head_input(e, &scaler.apply(f)?),
                h.label.code().expect("labelled"),
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    if examples[0].x.len() != HEAD_INPUT_DIM {
        tracing::warn!(width = examples[0].x.len(), "head input width differs from the standard 1103");
    }
    let out_dim = policy.kind.out_dim();
    let folds = cross_validate(&examples, &train_cfg, out_dim)?;
    let mean_f1 = folds.iter().map(|f| f.f1).sum::<f64>() / folds.len() as f64;
    tracing::info!(mean_f1, folds = folds.len(), "cross-validation done");
    let head = train_head(&examples, &train_cfg, out_dim)?;
    head.save(out.join("model.json"), train_cfg.seed, &train_cfg)?;
    let report = TrainReport {
        cross_validation: folds,
        mean_f1,
    };
    write_json(&out.join("cv.json"), &report)?;
    Ok((
        Task1Model {
            featurizer,
            scaler,
            head,
            policy,
            window: cfg.run.window,
        },
        report,
    ))
}

/// Per-round strategy: score every subject's last `window` posts seen so
/// far. A subject stays positive once alerted.
struct LiveStrategy<'a> {
    model: &'a Task1Model,
    seen: BTreeMap<String, Vec<Post>>,
    alerted: BTreeSet<String>,
}

impl LiveStrategy<'_> {
    fn decide_round(&mut self, writings: &[Writing]) -> Result<Vec<DecisionMsg>> {
        for w in writings {
            let date = parse_timestamp(&w.date).ok_or_else(|| {
                Error::Protocol(format!("bad date {:?} for {}", w.date, w.subject_id))
            })?;
            self.seen.entry(w.subject_id.clone()).or_default().push(Post {
                date,
                title: w.title.clone(),
                text: w.text.clone(),
                round_index: w.round,
            });
        }
        let windows: Vec<PostWindow> = writings
            .iter()
            .map(|w| {
                let posts = &self.seen[&w.subject_id];
                let start = posts.len().saturating_sub(self.model.window);
                PostWindow {
                    subject_id: w.subject_id.clone(),
                    posts: posts[start..].to_vec(),
                    selection: Selection::LastN(self.model.window),
                }
            })
            .collect();
        let items: Vec<(String, &PostWindow)> = writings
            .iter()
            .zip(&windows)
            .map(|(w, win)| (format!("{}#{}", w.subject_id, w.round), win))
            .collect();
        let decisions = self.model.predict(&items)?;
        Ok(writings
            .iter()
            .zip(decisions)
            .map(|(w, d)| {
                let mut label = d.label;
                if self.alerted.contains(&w.subject_id) {
                    label = 1;
                } else if label == 1 {
                    self.alerted.insert(w.subject_id.clone());
                }
                DecisionMsg {
                    subject_id: w.subject_id.clone(),
                    decision: label,
                    score: d.score,
                }
            })
            .collect())
    }
}

/// Stream `histories` through a fresh server and answer every round.
pub fn simulate_stage(
    model: &Task1Model,
    histories: Vec<UserHistory>,
    transport: TransportKind,
) -> Result<DecisionLog> {
    let server = StreamServer::new(histories, &[TEAM_TOKEN]);
    let mut strategy = LiveStrategy {
        model,
        seen: BTreeMap::new(),
        alerted: BTreeSet::new(),
    };
    let mut decide = |w: &[Writing]| strategy.decide_round(w);
    match transport {
        TransportKind::InProcess => run_client(
            InProcess {
                server,
                token: TEAM_TOKEN.into(),
            },
            &mut decide,
        ),
        TransportKind::Http => {
            let handle = spawn_http(server, "127.0.0.1:0")?;
            let log = run_client(HttpTransport::new(&handle.url(), TEAM_TOKEN), &mut decide);
            handle.shutdown()?;
            log
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RankingReport {
    pub after_writings: usize,
    pub rows: Vec<RankingAtK>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Task1Metrics {
    #[serde(flatten)]
    pub decision: DecisionMetrics,
    pub ranking: Vec<RankingReport>,
}

impl Task1Metrics {
    pub fn table(&self) -> String {
        let mut rows = self.decision.rows();
        for r in &self.ranking {
            rows.extend(ranking_rows(r.after_writings, &r.rows));
        }
        format_table("Task 1 metrics", &rows)
    }
}

pub fn evaluate_stage(
    log: &DecisionLog,
    gold: &BTreeMap<String, u8>,
    cfg: &MetricConfig,
) -> Result<Task1Metrics> {
    let decision = decision_metrics(log, gold, cfg)?;
    let mut ranking = Vec::new();
    for &after in &cfg.ranking_after {
        let scores = scores_after(log, after);
        if scores.is_empty() {
            continue;
        }
        ranking.push(RankingReport {
            after_writings: after,
            rows: ranking_metrics(&scores, gold, &cfg.ks)?,
        });
    }
    Ok(Task1Metrics { decision, ranking })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub seed: u64,
    pub versions: BTreeMap<String, String>,
    pub inputs: BTreeMap<String, String>,
    pub artifacts: BTreeMap<String, String>,
}

fn write_manifest(
    cfg: &ExperimentConfig,
    out: &Path,
    providers: &[(&str, &str)],
    artifacts: &[&str],
) -> Result<Manifest> {
    let mut versions = BTreeMap::new();
    versions.insert("earlyrisk".to_string(), env!("CARGO_PKG_VERSION").to_string());
    for (k, v) in providers {
        versions.insert(k.to_string(), v.to_string());
    }
    let mut inputs = BTreeMap::new();
    for p in [&cfg.corpus.train, &cfg.corpus.test, &cfg.corpus.gold, &cfg.corpus.questionnaire]
        .into_iter()
        .flatten()
    {
        inputs.insert(p.display().to_string(), file_sha256(p)?);
    }
    let mut hashes = BTreeMap::new();
    for name in artifacts {
        hashes.insert(name.to_string(), file_sha256(&out.join(name))?);
    }
    let m = Manifest {
        config_hash: cfg.hash(),
        seed: cfg.run.seed,
        versions,
        inputs,
        artifacts: hashes,
    };
    write_json(&out.join("manifest.json"), &m)?;
    Ok(m)
}

fn create_dir(out: &Path) -> Result<()> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))
}

#[derive(Debug, Clone)]
pub struct Task1Artifacts {
    pub dir: PathBuf,
    pub metrics: Task1Metrics,
    pub train: TrainReport,
    pub manifest: Manifest,
}

pub fn run_task1(cfg: &ExperimentConfig) -> Result<Task1Artifacts> {
    cfg.validate()?;
    let out = cfg.run.output.clone();
    create_dir(&out)?;
    let train_path = cfg.corpus.train.clone().expect("validated");
    let test_path = cfg.corpus.test.clone().expect("validated");
    tracing::info!(run = cfg.run.id, seed = cfg.run.seed, "task 1 started");

    let train = load_corpus(&train_path).map_err(Error::at("ingest"))?;
    let test = load_corpus(&test_path).map_err(Error::at("ingest"))?;
    let gold = match &cfg.corpus.gold {
        Some(p) => read_golden_truth(p)
            .map_err(Error::at("ingest"))?
            .into_iter()
            .collect(),
        None => gold_labels(&test),
    };
    let (model, train_report) = train_stage(cfg, &train, &out).map_err(Error::at("train"))?;
    let log = simulate_stage(&model, test, cfg.run.transport).map_err(Error::at("simulate"))?;
    log.write_csv(out.join("decisions.csv"))?;
    let metrics = evaluate_stage(&log, &gold, &cfg.metrics).map_err(Error::at("evaluate"))?;
    write_json(&out.join("metrics.json"), &metrics)?;
    let table = metrics.table();
    fs::write(out.join("metrics.txt"), &table).map_err(|e| Error::io(out.join("metrics.txt"), e))?;
    let manifest = write_manifest(
        cfg,
        &out,
        &[
            ("embedding", model.featurizer.embedder.id()),
            ("emotions", model.featurizer.emotions.id()),
        ],
        &[
            "features.csv",
            "scaler.json",
            "model.json",
            "cv.json",
            "decisions.csv",
            "metrics.json",
        ],
    )?;
    tracing::info!(dir = %out.display(), "task 1 finished");
    Ok(Task1Artifacts {
        dir: out,
        metrics,
        train: train_report,
        manifest,
    })
}

#[derive(Debug, Clone)]
pub struct Task3Artifacts {
    pub dir: PathBuf,
    pub scores: BTreeMap<String, SheetScores>,
    pub metrics: Option<QuestionnaireMetrics>,
    pub manifest: Manifest,
}

pub fn run_task3(cfg: &ExperimentConfig) -> Result<Task3Artifacts> {
    cfg.validate()?;
    let out = cfg.run.output.clone();
    create_dir(&out)?;
    let edeq_cfg = cfg.edeq_config()?;
    tracing::info!(run = cfg.run.id, threshold = edeq_cfg.day_threshold, "task 3 started");
    let q = match &cfg.corpus.questionnaire {
        Some(p) => Questionnaire::load(p).map_err(Error::at("ingest"))?,
        None => Questionnaire::bundled(),
    };
    let test_path = cfg.corpus.test.clone().expect("validated");
    let histories = load_corpus(&test_path).map_err(Error::at("ingest"))?;
    let provider = cfg.run.embedding.build().map_err(Error::at("fill"))?;
    let sheets = fill_all(&histories, &q, &edeq_cfg, provider.as_ref(), cfg.run.parallelism)
        .map_err(Error::at("fill"))?;
    write_answers(out.join("answers.txt"), &sheets)?;
    let scores = sheets
        .iter()
        .map(|(u, s)| Ok((u.clone(), score_sheet(s, &q)?)))
        .collect::<Result<BTreeMap<_, _>>>()
        .map_err(Error::at("score"))?;
    write_json(&out.join("scores.json"), &scores)?;
    let mut artifacts = vec!["answers.txt", "scores.json"];
    let metrics = match &cfg.corpus.gold {
        Some(p) => {
            let gold = read_answers(p).map_err(Error::at("evaluate"))?;
            let m = questionnaire_metrics(&sheets, &gold, &q).map_err(Error::at("evaluate"))?;
            write_json(&out.join("metrics.json"), &m)?;
            let table = format_table("Task 3 metrics", &m.rows());
            fs::write(out.join("metrics.txt"), table)
                .map_err(|e| Error::io(out.join("metrics.txt"), e))?;
            artifacts.push("metrics.json");
            Some(m)
        }
        None => {
            tracing::info!("no gold answers configured; metrics skipped");
            None
        }
    };
    let manifest = write_manifest(cfg, &out, &[("embedding", provider.id())], &artifacts)?;
    Ok(Task3Artifacts {
        dir: out,
        scores,
        metrics,
        manifest,
    })
}

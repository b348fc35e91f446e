use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use earlyrisk::corpus::{
    gold_labels, ingest_erisk_xml, read_golden_truth, select_last_n, write_jsonl,
};
use earlyrisk::edeq::{fill_all, read_answers, score_sheet, write_answers, Questionnaire};
use earlyrisk::features::write_feature_csv;
use earlyrisk::metrics::{format_table, questionnaire_metrics};
use earlyrisk::par::Parallelism;
use earlyrisk::pipeline::{
    evaluate_stage, load_corpus, run_task1, run_task3, simulate_stage, train_stage, write_json,
    ExperimentConfig, Featurizer, Task1Model, TransportKind, TEAM_TOKEN,
};
use earlyrisk::stream::{spawn_http, DecisionLog, StreamServer};
use earlyrisk::synth;
use tracing_subscriber::EnvFilter;

/// Print to stdout, ignoring a closed pipe (e.g. when piped into `head`).
macro_rules! say {
    ($($t:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout(), $($t)*);
    }};
}

macro_rules! say_raw {
    ($($t:tt)*) => {{
        use std::io::Write as _;
        let _ = write!(std::io::stdout(), $($t)*);
    }};
}

#[derive(Parser)]
#[command(name = "earlyrisk", version, about = "Early risk detection workbench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Transport {
    Http,
    InProcess,
}

/// Config file plus the flags that override its keys.
#[derive(Args, Clone, Default)]
struct ConfigArgs {
    /// TOML experiment config
    #[arg(long, short)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Run id: 0-2 for Task 1, 1-3 for Task 3
    #[arg(long)]
    run: Option<u8>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    train_corpus: Option<PathBuf>,
    #[arg(long)]
    test_corpus: Option<PathBuf>,
    #[arg(long)]
    gold: Option<PathBuf>,
    #[arg(long, value_enum)]
    transport: Option<Transport>,
    /// Disable data parallelism
    #[arg(long)]
    sequential: bool,
}

/// Config file and run selection, for commands that name their own inputs
/// and outputs.
#[derive(Args, Clone, Default)]
struct RunArgs {
    /// TOML experiment config
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Run id: 0-2 for Task 1, 1-3 for Task 3
    #[arg(long)]
    run: Option<u8>,
    /// Disable data parallelism
    #[arg(long)]
    sequential: bool,
}

impl RunArgs {
    fn resolve(&self, task: u8) -> Result<ExperimentConfig> {
        ConfigArgs {
            config: self.config.clone(),
            run: self.run,
            sequential: self.sequential,
            ..ConfigArgs::default()
        }
        .resolve(task)
    }
}

impl ConfigArgs {
    fn resolve(&self, task: u8) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => {
                let mut c = ExperimentConfig::default();
                c.run.task = task;
                if task == 3 {
                    c.run.id = 1;
                }
                c
            }
        };
        if cfg.run.task != task && self.config.is_some() {
            bail!(earlyrisk::Error::Validation(format!(
                "config is for task {}, command needs task {task}",
                cfg.run.task
            )));
        }
        if let Some(s) = self.seed {
            cfg.run.seed = s;
        }
        if let Some(r) = self.run {
            cfg.run.id = r;
        }
        if let Some(o) = &self.output {
            cfg.run.output = o.clone();
        }
        if let Some(p) = &self.train_corpus {
            cfg.corpus.train = Some(p.clone());
        }
        if let Some(p) = &self.test_corpus {
            cfg.corpus.test = Some(p.clone());
        }
        if let Some(p) = &self.gold {
            cfg.corpus.gold = Some(p.clone());
        }
        if let Some(t) = self.transport {
            cfg.run.transport = match t {
                Transport::Http => TransportKind::Http,
                Transport::InProcess => TransportKind::InProcess,
            };
        }
        if self.sequential {
            cfg.run.parallelism = Parallelism::Sequential;
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run a full experiment from a config file
    Run {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// 1 (early detection) or 3 (questionnaire); defaults to the config's
        #[arg(long)]
        task: Option<u8>,
    },
    /// Normalize a JSONL file or eRisk XML directory into JSONL
    Ingest {
        #[arg(long)]
        input: PathBuf,
        /// Golden-truth labels (`subject_id label` per line)
        #[arg(long)]
        gold: Option<PathBuf>,
        #[arg(long)]
        output: PathBuf,
    },
    /// Write the 79 handcrafted features per subject
    Featurize {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[command(flatten)]
        cfg: RunArgs,
    },
    /// Train the head (cross-validation report plus final model)
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Stream a corpus through the round protocol, or serve it with --serve
    Simulate {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Directory with model.json and scaler.json (defaults to --output)
        #[arg(long)]
        model_dir: Option<PathBuf>,
        /// Only run the mock server
        #[arg(long)]
        serve: bool,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
        /// Team tokens accepted by the server
        #[arg(long = "token", default_value = TEAM_TOKEN)]
        tokens: Vec<String>,
    },
    /// Score a decision log against gold labels
    Evaluate {
        #[arg(long)]
        decisions: PathBuf,
        /// Golden-truth file, or a labelled JSONL corpus
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        cfg: RunArgs,
    },
    /// Answer the questionnaire for every user in a corpus
    EdeqFill {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        questionnaire: Option<PathBuf>,
        /// Overrides the run's day-based similarity threshold
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        inclusive_span: bool,
        #[command(flatten)]
        cfg: RunArgs,
    },
    /// Subscale and global scores, plus metrics when gold answers are given
    EdeqScore {
        #[arg(long)]
        answers: PathBuf,
        #[arg(long)]
        gold: Option<PathBuf>,
        #[arg(long)]
        questionnaire: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Print a metrics JSON file as a table
    Report {
        #[arg(long)]
        metrics: PathBuf,
    },
    /// Write the synthetic demo corpora
    Synth {
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            EnvFilter::try_from_env("EARLYRISK_LOG").unwrap_or_else(|_| EnvFilter::new("info")),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let validation = e
                .chain()
                .filter_map(|c| c.downcast_ref::<earlyrisk::Error>())
                .any(earlyrisk::Error::is_validation);
            if validation {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}

fn load_gold_labels(path: &Path) -> Result<BTreeMap<String, u8>> {
    let is_jsonl = path.extension().is_some_and(|e| e == "jsonl") || path.is_dir();
    Ok(if is_jsonl {
        gold_labels(&load_corpus(path)?)
    } else {
        read_golden_truth(path)?.into_iter().collect()
    })
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::Run { cfg, task } => {
            let task = match (task, &cfg.config) {
                (Some(t), _) => t,
                (None, Some(p)) => ExperimentConfig::load(p)?.run.task,
                (None, None) => 1,
            };
            let exp = cfg.resolve(task)?;
            match task {
                1 => {
                    let a = run_task1(&exp)?;
                    say_raw!("{}", a.metrics.table());
                    say!("artifacts written to {}", a.dir.display());
                }
                3 => {
                    let a = run_task3(&exp)?;
                    if let Some(m) = &a.metrics {
                        say_raw!("{}", format_table("Task 3 metrics", &m.rows()));
                    }
                    say!("artifacts written to {}", a.dir.display());
                }
                t => bail!(earlyrisk::Error::Validation(format!("task must be 1 or 3, got {t}"))),
            }
        }
        Command::Ingest { input, gold, output } => {
            let histories = if input.is_dir() {
                ingest_erisk_xml(&input, gold.as_deref())?
            } else {
                let mut h = load_corpus(&input)?;
                if let Some(g) = gold {
                    let labels = read_golden_truth(&g)?;
                    for u in &mut h {
                        if let Some(code) = labels.get(&u.subject_id) {
                            u.label = earlyrisk::corpus::Label::from_code(Some(*code))
                                .context("label code")?;
                        }
                    }
                }
                h
            };
            write_jsonl(&output, &histories)?;
            let posts: usize = histories.iter().map(|h| h.posts.len()).sum();
            say!("{} subjects, {posts} posts -> {}", histories.len(), output.display());
        }
        Command::Featurize { corpus, output, cfg } => {
            let exp = cfg.resolve(1)?;
            let policy = exp.run_id()?.policy();
            let histories = load_corpus(&corpus)?;
            let featurizer = Featurizer::from_config(&exp.run, policy.preprocess)?;
            let windows = histories
                .iter()
                .map(|h| select_last_n(h, exp.run.window))
                .collect::<earlyrisk::Result<Vec<_>>>()?;
            let items: Vec<_> = windows.iter().map(|w| (w.subject_id.clone(), w)).collect();
            let feats = featurizer.featurize(&items)?;
            let rows: Vec<_> = items
                .iter()
                .zip(feats)
                .map(|((id, _), (f, _))| (id.clone(), f))
                .collect();
            write_feature_csv(&output, &rows)?;
            say!("{} rows -> {}", rows.len(), output.display());
        }
        Command::Train { cfg } => {
            let exp = cfg.resolve(1)?;
            let train = exp
                .corpus
                .train
                .clone()
                .ok_or_else(|| earlyrisk::Error::Validation("a training corpus is required".into()))?;
            if !train.exists() {
                bail!(earlyrisk::Error::Validation(format!("{} does not exist", train.display())));
            }
            ensure_dir(&exp.run.output)?;
            let histories = load_corpus(&train)?;
            let (_, report) = train_stage(&exp, &histories, &exp.run.output)?;
            for f in &report.cross_validation {
                say!(
                    "fold {}: P {:.3} R {:.3} F1 {:.3}",
                    f.fold, f.precision, f.recall, f.f1
                );
            }
            say!("mean F1 {:.3}; model written to {}", report.mean_f1, exp.run.output.display());
        }
        Command::Simulate {
            cfg,
            model_dir,
            serve,
            addr,
            tokens,
        } => {
            let exp = cfg.resolve(1)?;
            let corpus = exp
                .corpus
                .test
                .clone()
                .ok_or_else(|| earlyrisk::Error::Validation("--test-corpus is required".into()))?;
            let histories = load_corpus(&corpus)?;
            if serve {
                let refs: Vec<&str> = tokens.iter().map(String::as_str).collect();
                let server = StreamServer::new(histories, &refs);
                let handle = spawn_http(server, &addr)?;
                say!("serving {} on {}", corpus.display(), handle.url());
                handle.wait()?;
                return Ok(());
            }
            let dir = model_dir.unwrap_or_else(|| exp.run.output.clone());
            let model = Task1Model::load(&exp, &dir)?;
            let log = simulate_stage(&model, histories, exp.run.transport)?;
            ensure_dir(&exp.run.output)?;
            let path = exp.run.output.join("decisions.csv");
            log.write_csv(&path)?;
            say!("{} subjects -> {}", log.len(), path.display());
        }
        Command::Evaluate {
            decisions,
            gold,
            output,
            cfg,
        } => {
            let exp = cfg.resolve(1)?;
            let log = DecisionLog::read_csv(&decisions)?;
            let labels = load_gold_labels(&gold)?;
            let metrics = evaluate_stage(&log, &labels, &exp.metrics)?;
            if let Some(o) = output {
                write_json(&o, &metrics)?;
            }
            say_raw!("{}", metrics.table());
        }
        Command::EdeqFill {
            corpus,
            output,
            questionnaire,
            threshold,
            inclusive_span,
            cfg,
        } => {
            let mut exp = cfg.resolve(3)?;
            if threshold.is_some() {
                exp.edeq.day_threshold = threshold;
            }
            exp.edeq.inclusive_span |= inclusive_span;
            let edeq_cfg = exp.edeq_config()?;
            let q = match questionnaire.or(exp.corpus.questionnaire.clone()) {
                Some(p) => Questionnaire::load(p)?,
                None => Questionnaire::bundled(),
            };
            let histories = load_corpus(&corpus)?;
            let provider = exp.run.embedding.build()?;
            let sheets = fill_all(&histories, &q, &edeq_cfg, provider.as_ref(), exp.run.parallelism)?;
            write_answers(&output, &sheets)?;
            say!(
                "{} users answered with threshold {} -> {}",
                sheets.len(),
                edeq_cfg.day_threshold,
                output.display()
            );
        }
        Command::EdeqScore {
            answers,
            gold,
            questionnaire,
            output,
        } => {
            let q = match questionnaire {
                Some(p) => Questionnaire::load(p)?,
                None => Questionnaire::bundled(),
            };
            let sheets = read_answers(&answers)?;
            let scores = sheets
                .iter()
                .map(|(u, s)| Ok((u.clone(), score_sheet(s, &q)?)))
                .collect::<earlyrisk::Result<BTreeMap<_, _>>>()?;
            let mut report = serde_json::json!({ "scores": scores });
            if let Some(g) = gold {
                let m = questionnaire_metrics(&sheets, &read_answers(&g)?, &q)?;
                say_raw!("{}", format_table("Task 3 metrics", &m.rows()));
                report["metrics"] = serde_json::to_value(&m)?;
            } else {
                for (u, s) in &scores {
                    say!(
                        "{u}: RS {:.3} ECS {:.3} SCS {:.3} WCS {:.3} global {:.3}",
                        s.rs, s.ecs, s.scs, s.wcs, s.global
                    );
                }
            }
            if let Some(o) = output {
                write_json(&o, &report)?;
            }
        }
        Command::Report { metrics } => {
            let text = std::fs::read_to_string(&metrics)
                .with_context(|| format!("reading {}", metrics.display()))?;
            let value: serde_json::Value = serde_json::from_str(&text)
                .map_err(|e| earlyrisk::Error::Validation(format!("{}: {e}", metrics.display())))?;
            let mut rows = Vec::new();
            flatten("", &value, &mut rows);
            if rows.is_empty() {
                bail!(earlyrisk::Error::Validation(format!(
                    "{} holds no numeric metrics",
                    metrics.display()
                )));
            }
            say_raw!("{}", format_table(&metrics.display().to_string(), &rows));
        }
        Command::Synth { output, seed } => {
            ensure_dir(&output)?;
            let t1_train = synth::task1_corpus(&synth::Task1Spec::default(), seed);
            let t1_test = synth::task1_corpus(&synth::Task1Spec::default(), seed + 1);
            let (t3, gold) = synth::task3_corpus(&synth::Task3Spec::default(), seed);
            write_jsonl(output.join("task1_train.jsonl"), &t1_train)?;
            write_jsonl(output.join("task1_test.jsonl"), &t1_test)?;
            write_jsonl(output.join("task3.jsonl"), &t3)?;
            write_answers(output.join("task3_gold.txt"), &gold)?;
            say!("synthetic corpora written to {}", output.display());
        }
    }
    Ok(())
}

/// Numeric leaves of a JSON document with dotted paths.
fn flatten(prefix: &str, v: &serde_json::Value, out: &mut Vec<(String, f64)>) {
    let join = |k: &str| {
        if prefix.is_empty() {
            k.to_string()
        } else {
            format!("{prefix}.{k}")
        }
    };
    match v {
        serde_json::Value::Number(n) => {
            if let Some(x) = n.as_f64() {
                out.push((prefix.to_string(), x));
            }
        }
        serde_json::Value::Object(map) => {
            for (k, child) in map {
                flatten(&join(k), child, out);
            }
        }
        serde_json::Value::Array(items) => {
            for (i, child) in items.iter().enumerate() {
                flatten(&join(&i.to_string()), child, out);
            }
        }
        serde_json::Value::Null => out.push((prefix.to_string(), f64::NAN)),
        _ => {}
    }
}

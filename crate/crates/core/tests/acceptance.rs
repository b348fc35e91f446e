//! Acceptance suite. Each criterion prints one PASS/FAIL line; the process
//! exits non-zero if any criterion fails.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use chrono::{TimeZone, Utc};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use earlyrisk::corpus::{select_last_days, Label, PostWindow, RawPost, UserHistory};
use earlyrisk::edeq::{
    answer_day_question, answer_scale_question, day_bucket, item_similarities, qualifying_posts,
    AnswerSheet, EdeqConfig, EdeqRun, ItemKind, Questionnaire,
};
use earlyrisk::embed::{Document, Embedding, EmbeddingProvider, HashEmbedder};
use earlyrisk::lexdiv::{lexdiv, LexDivConfig};
use earlyrisk::metrics::{decision_metrics, questionnaire_metrics, MetricConfig};
use earlyrisk::model::{
    cross_validate, forward_trace, init_head_with_dims, loss_and_grad, Example, HeadParams, Mode,
    TrainConfig,
};
use earlyrisk::par::Parallelism;
use earlyrisk::pipeline::{run_task1, run_task3, ExperimentConfig};
use earlyrisk::readability::{from_stats, FormulaRegistry, TextStats};
use earlyrisk::stream::{
    run_client, spawn_http, DecisionLog, DecisionMsg, HttpTransport, InProcess, LogEntry,
    StreamServer, Writing,
};
use earlyrisk::synth::{shifted_gaussians, task1_corpus, task3_corpus, Task1Spec, Task3Spec};
use earlyrisk::Error;

type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn within(limit: Duration, start: Instant) -> Result<(), String> {
    let took = start.elapsed();
    ensure!(took < limit, "took {took:.2?}, limit {limit:?}");
    Ok(())
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------- lexdiv

fn random_tokens(r: &mut ChaCha8Rng, max_n: usize, max_vocab: usize) -> Vec<String> {
    let n = r.gen_range(1..=max_n);
    let vocab = r.gen_range(1..=max_vocab);
    (0..n).map(|_| format!("w{}", r.gen_range(0..vocab))).collect()
}

fn distinct(tokens: &[String]) -> usize {
    tokens.iter().collect::<HashSet<_>>().len()
}

fn oracle_ttr(tokens: &[String]) -> f64 {
    distinct(tokens) as f64 / tokens.len() as f64
}

fn oracle_msttr(tokens: &[String], seg: usize) -> f64 {
    if tokens.len() < seg {
        return oracle_ttr(tokens);
    }
    let full = tokens.len() / seg;
    let mut sum = 0.0;
    for i in 0..full {
        sum += oracle_ttr(&tokens[i * seg..(i + 1) * seg]);
    }
    sum / full as f64
}

fn oracle_mattr(tokens: &[String], win: usize) -> f64 {
    if tokens.len() < win {
        return oracle_ttr(tokens);
    }
    let windows = tokens.len() - win + 1;
    let mut sum = 0.0;
    for i in 0..windows {
        sum += oracle_ttr(&tokens[i..i + win]);
    }
    sum / windows as f64
}

/// Expected number of distinct types in a size-`s` sample, by listing
/// every subset of token positions.
fn oracle_hdd_exhaustive(tokens: &[String], s: usize) -> f64 {
    let n = tokens.len();
    let s = s.min(n);
    let mut subsets = 0u64;
    let mut present_total = 0u64;
    for mask in 0u32..(1u32 << n) {
        if mask.count_ones() as usize != s {
            continue;
        }
        subsets += 1;
        let types: HashSet<&String> = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| &tokens[i]).collect();
        present_total += types.len() as u64;
    }
    present_total as f64 / subsets as f64 / s as f64
}

/// MTLD written from the textbook description: walk the text, close a
/// factor whenever the running TTR drops below the threshold, add a
/// partial factor for the remainder, average both reading directions.
fn oracle_mtld(tokens: &[String], threshold: f64) -> f64 {
    fn one_direction(seq: Vec<&String>, threshold: f64) -> f64 {
        let mut factors = 0.0;
        let mut start = 0;
        for end in 1..=seq.len() {
            let segment = &seq[start..end];
            let types = segment.iter().collect::<HashSet<_>>().len();
            if (types as f64) / (segment.len() as f64) < threshold {
                factors += 1.0;
                start = end;
            }
        }
        if start < seq.len() {
            let rest = &seq[start..];
            let ttr = rest.iter().collect::<HashSet<_>>().len() as f64 / rest.len() as f64;
            factors += (1.0 - ttr) / (1.0 - threshold);
        }
        if factors == 0.0 {
            seq.len() as f64
        } else {
            seq.len() as f64 / factors
        }
    }
    let fwd = one_direction(tokens.iter().collect(), threshold);
    let bwd = one_direction(tokens.iter().rev().collect(), threshold);
    (fwd + bwd) / 2.0
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

fn lexdiv_oracle() -> Check {
    let start = Instant::now();
    let cfg = LexDivConfig::default();
    let mut r = rng(11);
    for case in 0..200 {
        let t = random_tokens(&mut r, 500, 50);
        let got = lexdiv(&t, &cfg).map_err(|e| e.to_string())?;
        let n = t.len() as f64;
        let v = distinct(&t) as f64;
        let (log_ttr, maas) = if t.len() == 1 {
            (1.0, 0.0)
        } else {
            (v.ln() / n.ln(), (n.ln() - v.ln()) / n.ln().powi(2))
        };
        let expect = [
            ("ttr", got.ttr, v / n),
            ("root_ttr", got.root_ttr, v / n.sqrt()),
            ("log_ttr", got.log_ttr, log_ttr),
            ("maas", got.maas, maas),
            ("msttr", got.msttr, oracle_msttr(&t, cfg.segment_len)),
            ("mattr", got.mattr, oracle_mattr(&t, cfg.window_len)),
        ];
        for (name, g, e) in expect {
            ensure!(close(g, e, 1e-12), "case {case} (N={}): {name} {g} vs oracle {e}", t.len());
        }
        let m = oracle_mtld(&t, cfg.mtld_threshold);
        ensure!(close(got.mtld, m, 1e-9), "case {case}: mtld {} vs oracle {m}", got.mtld);
        if t.len() <= 12 {
            let h = oracle_hdd_exhaustive(&t, cfg.hdd_sample);
            ensure!(close(got.hdd, h, 1e-9), "case {case}: hdd {} vs enumeration {h}", got.hdd);
        }
    }
    // small corpora against full enumeration for every sample size up to 5
    let mut hdd_cases = 0;
    for _ in 0..300 {
        let t = random_tokens(&mut r, 12, 6);
        for s in 1..=5 {
            let c = LexDivConfig { hdd_sample: s, ..cfg };
            let got = lexdiv(&t, &c).map_err(|e| e.to_string())?.hdd;
            let h = oracle_hdd_exhaustive(&t, s);
            ensure!(close(got, h, 1e-9), "N={} s={s}: hdd {got} vs enumeration {h}", t.len());
            hdd_cases += 1;
        }
    }
    within(Duration::from_secs(10), start)?;
    Ok(format!("200 sequences, {hdd_cases} exhaustive HD-D cases"))
}

fn lexdiv_identities() -> Check {
    let cfg = LexDivConfig::default();
    let mut r = rng(12);
    for _ in 0..300 {
        let t = random_tokens(&mut r, 42, 20);
        let s = lexdiv(&t, &cfg).map_err(|e| e.to_string())?;
        ensure!(s.hdd == s.ttr, "N={}: hdd {} != ttr {}", t.len(), s.hdd, s.ttr);
        let wide = LexDivConfig { window_len: t.len() + r.gen_range(0..5), ..cfg };
        let s2 = lexdiv(&t, &wide).map_err(|e| e.to_string())?;
        ensure!(s2.mattr == s2.ttr, "window >= N: mattr {} != ttr {}", s2.mattr, s2.ttr);
    }
    for n in 1..=200 {
        let t: Vec<String> = (0..n).map(|i| format!("u{i}")).collect();
        let s = lexdiv(&t, &cfg).map_err(|e| e.to_string())?;
        ensure!(s.maas == 0.0 && s.log_ttr == 1.0, "unique N={n}: maas {} log_ttr {}", s.maas, s.log_ttr);
    }
    Ok("300 short sequences, 200 all-unique".into())
}

// ----------------------------------------------------------- readability

fn readability_fixture() -> Check {
    let stats = TextStats {
        words: 6,
        sentences: 2,
        syllables: 10,
        letters: 23,
        rare_words: Some(0),
        ..TextStats::default()
    };
    let r = from_stats(&stats, &FormulaRegistry::bundled()).map_err(|e| e.to_string())?;
    let expect = [
        ("fernandez_huerta", r.fernandez_huerta, 72.84),
        ("flesch_szigriszt", r.flesch_szigriszt, 100.0017),
        ("gutierrez", r.gutierrez, 56.9667),
        ("ari", r.ari, -1.875),
    ];
    for (name, got, want) in expect {
        ensure!(close(got, want, 1e-3), "{name}: {got} vs {want}");
    }
    Ok(format!(
        "FH {:.4} IFSZ {:.4} G {:.4} ARI {:.4}",
        r.fernandez_huerta, r.flesch_szigriszt, r.gutierrez, r.ari
    ))
}

// ----------------------------------------------------------------- model

/// Loss from logits, written from the definitions.
fn reference_loss(logits: &[f64], label: u8) -> f64 {
    if logits.len() == 1 {
        let p = 1.0 / (1.0 + (-logits[0]).exp());
        if label == 1 {
            -p.ln()
        } else {
            -(1.0 - p).ln()
        }
    } else {
        let denom: f64 = logits.iter().map(|z| z.exp()).sum();
        -(logits[label as usize].exp() / denom).ln()
    }
}

/// Mean loss and, per sample, the set of active hidden units.
fn probe(h: &HeadParams, batch: &[Example], modes: &[Mode]) -> (f64, Vec<Vec<bool>>) {
    let mut total = 0.0;
    let mut active = Vec::with_capacity(batch.len());
    for (ex, mode) in batch.iter().zip(modes) {
        let tr = forward_trace(h, &ex.x, *mode).expect("forward");
        total += reference_loss(&tr.logits, ex.label);
        active.push(tr.pre.iter().zip(&tr.mask).map(|(p, m)| p * m > 0.0).collect());
    }
    (total / batch.len() as f64, active)
}

fn gradient_check() -> Check {
    const EPS: f64 = 1e-4;
    const FLOOR: f64 = 1e-7;
    let start = Instant::now();
    let mut r = rng(13);
    let mut worst = 0.0f64;
    let (mut checked, mut skipped) = (0usize, 0usize);
    for draw in 0..20u64 {
        let out = 1 + (draw % 2) as usize;
        let mut h = init_head_with_dims(draw, 1103, 128, out).map_err(|e| e.to_string())?;
        for b in h.b1.iter_mut().chain(h.b2.iter_mut()) {
            *b = r.gen_range(-0.1..0.1);
        }
        let batch: Vec<Example> = (0..4)
            .map(|_| {
                let x = (0..1103).map(|_| r.sample::<f64, _>(StandardNormal)).collect();
                Example::new(x, r.gen_range(0..2))
            })
            .collect();
        let mode = if draw % 3 == 0 {
            Mode::Eval
        } else {
            Mode::Train { dropout_seed: 1000 + draw }
        };
        let refs: Vec<&Example> = batch.iter().collect();
        let lg = loss_and_grad(&h, &refs, mode, Parallelism::Sequential).map_err(|e| e.to_string())?;
        let modes = sample_modes(mode, batch.len());
        let (base, base_active) = probe(&h, &batch, &modes);
        ensure!(close(base, lg.loss, 1e-9), "draw {draw}: loss {} vs reference {base}", lg.loss);

        let (n1, n2, n3, n4) = (h.w1.len(), h.b1.len(), h.w2.len(), h.b2.len());
        let mut coords: Vec<usize> = (0..12).map(|_| r.gen_range(0..n1)).collect();
        coords.extend((0..6).map(|_| n1 + r.gen_range(0..n2)));
        coords.extend((0..6).map(|_| n1 + n2 + r.gen_range(0..n3)));
        coords.extend((0..n4).map(|k| n1 + n2 + n3 + k));
        let analytic: Vec<f64> = lg.grad.flat().copied().collect();
        for &c in &coords {
            let orig = *h.param_mut(c);
            *h.param_mut(c) = orig + EPS;
            let (plus, act_plus) = probe(&h, &batch, &modes);
            *h.param_mut(c) = orig - EPS;
            let (minus, act_minus) = probe(&h, &batch, &modes);
            *h.param_mut(c) = orig;
            // a ReLU switching inside [-eps, eps] makes the difference quotient meaningless
            if act_plus != base_active || act_minus != base_active {
                skipped += 1;
                continue;
            }
            let numeric = (plus - minus) / (2.0 * EPS);
            let a = analytic[c];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(FLOOR);
            worst = worst.max(rel);
            checked += 1;
            ensure!(rel < 1e-4, "draw {draw} coord {c}: analytic {a:e} numeric {numeric:e} rel {rel:e}");
        }
    }
    within(Duration::from_secs(5), start)?;
    ensure!(checked > 300, "only {checked} coordinates checked ({skipped} skipped at kinks)");
    Ok(format!("{checked} coordinates, {skipped} kink skips, max rel err {worst:.2e}"))
}

/// Per-sample dropout modes as the batch gradient derives them, so the
/// reference loss sees the same masks.
fn sample_modes(mode: Mode, n: usize) -> Vec<Mode> {
    match mode {
        Mode::Eval => vec![Mode::Eval; n],
        Mode::Train { dropout_seed } => (0..n)
            .map(|i| Mode::Train {
                dropout_seed: earlyrisk::rng::derive(dropout_seed, i as u64),
            })
            .collect(),
    }
}

fn training_sanity() -> Check {
    let start = Instant::now();
    let data = shifted_gaussians(200, 1103, 2.0, 14);
    let cfg = TrainConfig {
        epochs: 20,
        parallelism: Parallelism::Parallel,
        ..TrainConfig::default()
    };
    ensure!(cfg.learning_rate == 5e-5 && cfg.batch_size == 8, "not the paper's hyperparameters");
    let folds = cross_validate(&data, &cfg, 2).map_err(|e| e.to_string())?;
    let mean_f1 = folds.iter().map(|f| f.f1).sum::<f64>() / folds.len() as f64;
    within(Duration::from_secs(30), start)?;
    ensure!(folds.len() == 5, "{} folds", folds.len());
    ensure!(mean_f1 >= 0.95, "mean F1 {mean_f1:.4} < 0.95");
    Ok(format!("5-fold mean F1 {mean_f1:.4}"))
}

// --------------------------------------------------------------- metrics

fn log_from(alerts: &[(&str, Option<usize>, usize)]) -> DecisionLog {
    // (subject, first alert round, rounds seen)
    let mut log = DecisionLog::default();
    for (s, alert, seen) in alerts {
        for round in 0..*seen {
            let decision = u8::from(alert.is_some_and(|a| round >= a));
            log.push(s, LogEntry { round, decision, score: 0.5 }).unwrap();
        }
    }
    log
}

fn erde_oracle(outcomes: &[(u8, Option<usize>)], o: f64) -> f64 {
    let positives = outcomes.iter().filter(|(g, _)| *g == 1).count() as f64;
    let c_fp = positives / outcomes.len() as f64;
    let cost: f64 = outcomes
        .iter()
        .map(|(g, alert)| match (g, alert) {
            (1, Some(round)) => {
                let k = (*round + 1) as f64;
                1.0 - 1.0 / (1.0 + (k - o).exp())
            }
            (0, Some(_)) => c_fp,
            (1, None) => 1.0,
            _ => 0.0,
        })
        .sum();
    cost / outcomes.len() as f64
}

fn erde_fixtures() -> Check {
    let cfg = MetricConfig::default();
    // a true positive on the first writing
    let log = log_from(&[("a", Some(0), 1), ("b", None, 5), ("c", Some(2), 3)]);
    let gold: BTreeMap<String, u8> = [("a", 1), ("b", 0), ("c", 0)].map(|(s, g)| (s.to_string(), g)).into();
    let m = decision_metrics(&log, &gold, &cfg).map_err(|e| e.to_string())?;
    ensure!(close(m.speed, 1.0, 1e-12), "speed {} at k=1", m.speed);
    ensure!(close(m.f_latency, m.f1, 1e-12), "F_latency {} vs F1 {}", m.f_latency, m.f1);

    // hand-built ten-subject logs
    let fixtures: [&[(&str, u8, Option<usize>, usize)]; 3] = [
        &[
            ("s0", 1, Some(0), 4),
            ("s1", 1, Some(4), 9),
            ("s2", 1, Some(60), 70),
            ("s3", 1, None, 30),
            ("s4", 0, Some(1), 3),
            ("s5", 0, None, 40),
            ("s6", 0, None, 12),
            ("s7", 0, Some(10), 11),
            ("s8", 0, None, 2),
            ("s9", 1, Some(49), 50),
        ],
        &[
            ("s0", 0, None, 3),
            ("s1", 0, None, 3),
            ("s2", 0, None, 3),
            ("s3", 0, None, 3),
            ("s4", 0, None, 3),
            ("s5", 0, None, 3),
            ("s6", 0, None, 3),
            ("s7", 0, None, 3),
            ("s8", 1, Some(5), 6),
            ("s9", 1, None, 9),
        ],
        &[
            ("s0", 1, Some(3), 4),
            ("s1", 1, Some(4), 5),
            ("s2", 1, Some(5), 6),
            ("s3", 1, Some(6), 7),
            ("s4", 1, Some(100), 101),
            ("s5", 0, Some(0), 1),
            ("s6", 0, Some(7), 8),
            ("s7", 0, None, 8),
            ("s8", 0, None, 8),
            ("s9", 0, None, 8),
        ],
    ];
    for (i, fx) in fixtures.iter().enumerate() {
        let entries: Vec<(&str, Option<usize>, usize)> = fx.iter().map(|(s, _, a, n)| (*s, *a, *n)).collect();
        let log = log_from(&entries);
        let gold: BTreeMap<String, u8> = fx.iter().map(|(s, g, _, _)| (s.to_string(), *g)).collect();
        let outcomes: Vec<(u8, Option<usize>)> = fx.iter().map(|(_, g, a, _)| (*g, *a)).collect();
        let m = decision_metrics(&log, &gold, &cfg).map_err(|e| e.to_string())?;
        for o in [5u32, 50] {
            let got = m.erde[&format!("ERDE_{o}")];
            let want = erde_oracle(&outcomes, f64::from(o));
            ensure!(close(got, want, 1e-9), "fixture {i}: ERDE_{o} {got} vs {want}");
        }
    }

    // monotone in o
    let mut r = rng(15);
    let os: Vec<u32> = vec![1, 2, 5, 10, 20, 50, 100, 500];
    let wide = MetricConfig { erde_o: os.clone(), ..cfg };
    for case in 0..100 {
        let n = r.gen_range(1..30);
        let mut log = DecisionLog::default();
        let mut gold = BTreeMap::new();
        for s in 0..n {
            let id = format!("u{s:02}");
            let seen = r.gen_range(1..200);
            let alert = r.gen_bool(0.5).then(|| r.gen_range(0..seen));
            for round in 0..seen {
                let decision = u8::from(alert.is_some_and(|a| round >= a));
                log.push(&id, LogEntry { round, decision, score: 0.0 }).unwrap();
            }
            gold.insert(id, u8::from(r.gen_bool(0.4)));
        }
        let m = decision_metrics(&log, &gold, &wide).map_err(|e| e.to_string())?;
        let values: Vec<f64> = os.iter().map(|o| m.erde[&format!("ERDE_{o}")]).collect();
        ensure!(
            values.windows(2).all(|w| w[1] <= w[0] + 1e-15),
            "case {case}: ERDE not non-increasing in o: {values:?}"
        );
    }
    Ok("k=1 speed, 3 ten-subject fixtures, 100 random logs".into())
}

// -------------------------------------------------------------- protocol

fn small_corpus(seed: u64) -> Vec<UserHistory> {
    let spec = Task1Spec {
        subjects: 8,
        min_posts: 2,
        max_posts: 9,
        ..Task1Spec::default()
    };
    task1_corpus(&spec, seed)
}

/// Alerts once a subject has produced a writing whose text length is a
/// multiple of 7.
fn deterministic_strategy() -> impl FnMut(&[Writing]) -> earlyrisk::Result<Vec<DecisionMsg>> {
    let mut alerted: BTreeSet<String> = BTreeSet::new();
    move |ws: &[Writing]| {
        Ok(ws
            .iter()
            .map(|w| {
                if w.text.len() % 7 == 0 {
                    alerted.insert(w.subject_id.clone());
                }
                let hit = alerted.contains(&w.subject_id);
                DecisionMsg {
                    subject_id: w.subject_id.clone(),
                    decision: u8::from(hit),
                    score: (w.text.len() % 100) as f64 / 100.0,
                }
            })
            .collect())
    }
}

fn log_bytes(log: &DecisionLog, dir: &Path, name: &str) -> Result<Vec<u8>, String> {
    let p = dir.join(name);
    log.write_csv(&p).map_err(|e| e.to_string())?;
    fs::read(&p).map_err(|e| e.to_string())
}

fn protocol_conformance() -> Check {
    let corpus = small_corpus(16);
    let server = StreamServer::new(corpus.clone(), &["t1", "t2"]);

    // no second release before the first round is answered
    let first = server.next_round("t1").map_err(|e| e.to_string())?;
    ensure!(!first.is_empty(), "empty first round");
    match server.next_round("t1") {
        Err(Error::Protocol(_)) => {}
        other => return Err(format!("early release not rejected: {other:?}")),
    }
    // partial answers do not complete the round
    let one = vec![DecisionMsg { subject_id: first[0].subject_id.clone(), decision: 0, score: 0.1 }];
    ensure!(matches!(server.submit("t1", &one), Err(Error::Protocol(_))), "partial submission accepted");
    ensure!(matches!(server.next_round("t1"), Err(Error::Protocol(_))), "release after partial submission");
    // another team is unaffected
    let other = server.next_round("t2").map_err(|e| e.to_string())?;
    ensure!(other == first, "teams saw different first rounds");

    // alert finality
    let mut decisions: Vec<DecisionMsg> = first
        .iter()
        .map(|w| DecisionMsg { subject_id: w.subject_id.clone(), decision: 0, score: 0.0 })
        .collect();
    decisions[0].decision = 1;
    server.submit("t1", &decisions).map_err(|e| e.to_string())?;
    let second = server.next_round("t1").map_err(|e| e.to_string())?;
    ensure!(second.iter().all(|w| w.round == first[0].round + 1), "round numbers not consecutive");
    let flipped: Vec<DecisionMsg> = second
        .iter()
        .map(|w| DecisionMsg { subject_id: w.subject_id.clone(), decision: 0, score: 0.0 })
        .collect();
    if second.iter().any(|w| w.subject_id == decisions[0].subject_id) {
        ensure!(
            matches!(server.submit("t1", &flipped), Err(Error::Protocol(_))),
            "1 -> 0 flip accepted"
        );
    }
    let mut log = DecisionLog::default();
    log.push("x", LogEntry { round: 0, decision: 1, score: 1.0 }).unwrap();
    ensure!(
        log.push("x", LogEntry { round: 1, decision: 0, score: 0.0 }).is_err(),
        "log accepted a 1 -> 0 flip"
    );

    // interleaving: every release is checked against the answered rounds
    let interleaved = StreamServer::new(corpus.clone(), &["a", "b"]);
    let mut answered = [None::<usize>; 2];
    let mut done = [false; 2];
    let mut turn = 0usize;
    let mut strategies = [deterministic_strategy(), deterministic_strategy()];
    while !done.iter().all(|d| *d) {
        let t = turn % 2;
        turn += 1;
        if done[t] {
            continue;
        }
        let token = ["a", "b"][t];
        let ws = interleaved.next_round(token).map_err(|e| e.to_string())?;
        if ws.is_empty() {
            done[t] = true;
            continue;
        }
        let round = ws[0].round;
        ensure!(
            answered[t].map_or(round == 0, |a| round == a + 1),
            "team {token} got round {round} after answering {:?}",
            answered[t]
        );
        ensure!(matches!(interleaved.next_round(token), Err(Error::Protocol(_))), "double release");
        let ds = (strategies[t])(&ws).map_err(|e| e.to_string())?;
        let ack = interleaved.submit(token, &ds).map_err(|e| e.to_string())?;
        ensure!(ack.round == round, "ack {} for round {round}", ack.round);
        answered[t] = Some(round);
    }

    // replay: same corpus and strategy, byte-identical logs in process and over HTTP
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut bytes = Vec::new();
    for i in 0..2 {
        let s = StreamServer::new(corpus.clone(), &["r"]);
        let log = run_client(InProcess { server: s, token: "r".into() }, &mut deterministic_strategy())
            .map_err(|e| e.to_string())?;
        bytes.push(log_bytes(&log, dir.path(), &format!("inproc{i}.csv"))?);
    }
    let s = StreamServer::new(corpus, &["r"]);
    let handle = spawn_http(s, "127.0.0.1:0").map_err(|e| e.to_string())?;
    let log = run_client(HttpTransport::new(&handle.url(), "r"), &mut deterministic_strategy())
        .map_err(|e| e.to_string())?;
    handle.shutdown().map_err(|e| e.to_string())?;
    bytes.push(log_bytes(&log, dir.path(), "http.csv")?);
    ensure!(bytes[0] == bytes[1] && bytes[1] == bytes[2], "replayed logs differ");
    Ok(format!("{turn} interleaved turns, replay log {} bytes", bytes[0].len()))
}

// ------------------------------------------------------------------ EDE-Q

/// Looks vectors up by document text; unknown text embeds to `fallback`.
struct FixedVectors {
    by_text: HashMap<String, Vec<f64>>,
    fallback: Vec<f64>,
}

impl EmbeddingProvider for FixedVectors {
    fn id(&self) -> &str {
        "fixed"
    }

    fn dim(&self) -> usize {
        self.fallback.len()
    }

    fn embed_batch(&self, docs: &[Document]) -> earlyrisk::Result<Vec<Embedding>> {
        Ok(docs
            .iter()
            .map(|d| Embedding {
                vector: self.by_text.get(&d.text).unwrap_or(&self.fallback).clone(),
                provider_id: "fixed".into(),
                degenerate: false,
            })
            .collect())
    }
}

fn history(id: &str, posts: &[(u32, &str)]) -> UserHistory {
    let raw = posts
        .iter()
        .map(|(day, text)| RawPost {
            date: Utc.with_ymd_and_hms(2023, 3, *day, 12, 0, 0).unwrap(),
            title: String::new(),
            text: text.to_string(),
        })
        .collect();
    UserHistory::new(id, Label::Unknown, raw)
}

fn window_of(h: &UserHistory) -> PostWindow {
    select_last_days(h, 28, None).unwrap()
}

fn edeq_fixtures() -> Check {
    let q = Questionnaire::bundled();
    let scale_item = q.items.iter().find(|i| i.kind == ItemKind::ScaleBased).unwrap();
    let day_item = q.items.iter().find(|i| i.kind == ItemKind::DayBased).unwrap();
    let s = 0.65f64;
    let mut by_text = HashMap::new();
    by_text.insert(scale_item.text.clone(), vec![1.0, 0.0, 0.0]);
    by_text.insert(day_item.text.clone(), vec![1.0, 0.0, 0.0]);
    by_text.insert("close".to_string(), vec![s, (1.0 - s * s).sqrt(), 0.0]);
    by_text.insert("same".to_string(), vec![1.0, 0.0, 0.0]);
    let provider = FixedVectors { by_text, fallback: vec![0.0, 0.0, 1.0] };

    let h = history("u", &[(1, "unrelated"), (3, "close"), (4, "unrelated")]);
    let a = answer_scale_question(&window_of(&h), scale_item, &provider).map_err(|e| e.to_string())?;
    ensure!(a == 6, "similarity 0.65 answered {a}");

    let h = history("u", &[(2, "same"), (5, "unrelated"), (9, "same")]);
    let cfg = EdeqConfig::for_run(EdeqRun::Run1);
    let a = answer_day_question(&window_of(&h), day_item, &cfg, &provider).map_err(|e| e.to_string())?;
    ensure!(a == 2 && day_bucket(7) == 2, "7-day span answered {a}");

    let (histories, gold) = task3_corpus(&Task3Spec::default(), 17);
    let m = questionnaire_metrics(&gold, &gold, &q).map_err(|e| e.to_string())?;
    ensure!(m.mzoe == 0.0 && m.mae == 0.0 && m.ged == 0.0, "perfect sheets scored {m:?}");

    // qualifying-post sets under the three run thresholds
    let embedder = HashEmbedder::new(1024, 512).map_err(|e| e.to_string())?;
    let [t1, t2, t3] = [EdeqRun::Run1, EdeqRun::Run2, EdeqRun::Run3].map(EdeqRun::threshold);
    let (mut sizes, mut strict) = ([0usize; 3], 0usize);
    for h in &histories {
        let w = window_of(h);
        for item in q.items.iter().filter(|i| i.kind == ItemKind::DayBased) {
            let sims = item_similarities(&w, item, &embedder).map_err(|e| e.to_string())?;
            let [q1, q2, q3]: [BTreeSet<usize>; 3] =
                [t1, t2, t3].map(|t| qualifying_posts(&sims, t).into_iter().collect());
            ensure!(q2.is_superset(&q3) && q3.is_superset(&q1), "{} item {}: sets out of order", h.subject_id, item.number);
            sizes[0] += q1.len();
            sizes[1] += q2.len();
            sizes[2] += q3.len();
            strict += usize::from(q2.len() > q1.len());
        }
    }
    Ok(format!(
        "qualifying posts run1/run2/run3 = {}/{}/{}, {strict} strictly larger under run 2",
        sizes[0], sizes[1], sizes[2]
    ))
}

// ---------------------------------------------------------- Task 3 oracle

/// Sheet slot -> instrument item number, and subscale members by item number.
const NUMBERS: [u8; 22] = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 19, 20, 21, 22, 23, 24, 25, 26, 27, 28];
const RS: &[u8] = &[1, 2, 3, 4, 5];
const ECS: &[u8] = &[7, 9, 19, 20, 21];
const SCS: &[u8] = &[6, 8, 10, 11, 23, 26, 27, 28];
const WCS: &[u8] = &[8, 12, 22, 24, 25];

fn brute_scores(sheet: &[u8]) -> [f64; 5] {
    let mean = |members: &[u8]| {
        let picked: Vec<f64> = NUMBERS
            .iter()
            .zip(sheet)
            .filter(|(n, _)| members.contains(n))
            .map(|(_, a)| f64::from(*a))
            .collect();
        picked.iter().sum::<f64>() / picked.len() as f64
    };
    let subs = [mean(RS), mean(ECS), mean(SCS), mean(WCS)];
    [subs.iter().sum::<f64>() / 4.0, subs[0], subs[1], subs[2], subs[3]]
}

fn brute_metrics(pred: &[Vec<u8>], gold: &[Vec<u8>]) -> [f64; 8] {
    let pairs: Vec<(u8, u8)> = pred
        .iter()
        .zip(gold)
        .flat_map(|(p, g)| p.iter().copied().zip(g.iter().copied()))
        .collect();
    let n = pairs.len() as f64;
    let mzoe = pairs.iter().filter(|(p, g)| p != g).count() as f64 / n;
    let err = |(p, g): &(u8, u8)| (f64::from(*p) - f64::from(*g)).abs();
    let mae = pairs.iter().map(err).sum::<f64>() / n;
    let mut class_maes = Vec::new();
    for c in 0..=6u8 {
        let members: Vec<&(u8, u8)> = pairs.iter().filter(|(_, g)| *g == c).collect();
        if !members.is_empty() {
            class_maes.push(members.iter().map(|p| err(p)).sum::<f64>() / members.len() as f64);
        }
    }
    let mae_macro = class_maes.iter().sum::<f64>() / class_maes.len() as f64;
    let mut score_err = [0.0; 5];
    for (p, g) in pred.iter().zip(gold) {
        let (ps, gs) = (brute_scores(p), brute_scores(g));
        for k in 0..5 {
            score_err[k] += (ps[k] - gs[k]).abs();
        }
    }
    let users = pred.len() as f64;
    [
        mzoe,
        mae,
        mae_macro,
        score_err[0] / users,
        score_err[1] / users,
        score_err[2] / users,
        score_err[3] / users,
        score_err[4] / users,
    ]
}

fn task3_oracle() -> Check {
    let q = Questionnaire::bundled();
    let mut r = rng(18);
    let users = |sheets: &[Vec<u8>]| -> BTreeMap<String, AnswerSheet> {
        sheets
            .iter()
            .enumerate()
            .map(|(i, a)| (format!("u{i:02}"), AnswerSheet { answers: a.clone() }))
            .collect()
    };
    let mut gold0 = vec![0u8; 22];
    gold0[1] = 6;
    let m = questionnaire_metrics(&users(&[vec![0; 22]]), &users(&[gold0]), &q).map_err(|e| e.to_string())?;
    let (mzoe, mae, macro_) = (1.0 / 22.0, 6.0 / 22.0, 3.0);
    ensure!(
        close(m.mzoe, mzoe, 1e-12) && close(m.mae, mae, 1e-12) && close(m.mae_macro, macro_, 1e-12),
        "single-miss sheet scored {m:?}"
    );
    for case in 0..50 {
        let n = r.gen_range(1..8);
        let skew = r.gen_bool(0.3);
        let draw = |r: &mut ChaCha8Rng| -> Vec<u8> {
            (0..22).map(|_| if skew { r.gen_range(0..2) * 6 } else { r.gen_range(0..=6) }).collect()
        };
        let gold: Vec<Vec<u8>> = (0..n).map(|_| draw(&mut r)).collect();
        let pred: Vec<Vec<u8>> = (0..n)
            .map(|u| {
                if r.gen_bool(0.2) {
                    gold[u].clone()
                } else {
                    draw(&mut r)
                }
            })
            .collect();
        let m = questionnaire_metrics(&users(&pred), &users(&gold), &q).map_err(|e| e.to_string())?;
        let got = [m.mzoe, m.mae, m.mae_macro, m.ged, m.rs, m.ecs, m.scs, m.wcs];
        let want = brute_metrics(&pred, &gold);
        ensure!(got[0] == want[0], "case {case}: MZOE {} vs {}", got[0], want[0]);
        let names = ["MZOE", "MAE", "MAE_macro", "GED", "RS", "ECS", "SCS", "WCS"];
        for k in 1..8 {
            ensure!(close(got[k], want[k], 1e-9), "case {case}: {} {} vs {}", names[k], got[k], want[k]);
        }
    }
    Ok("50 random sheet pairs".into())
}

// ----------------------------------------------------------- end to end

fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data/synthetic")
}

fn config(task: u8, out: &Path) -> ExperimentConfig {
    let d = data_dir();
    let text = if task == 1 {
        format!(
            "[corpus]\ntrain = {:?}\ntest = {:?}\n[run]\ntask = 1\nid = 2\nseed = 42\noutput = {:?}\n",
            d.join("task1_train.jsonl"),
            d.join("task1_test.jsonl"),
            out
        )
    } else {
        format!(
            "[corpus]\ntest = {:?}\ngold = {:?}\n[run]\ntask = 3\nid = 2\nseed = 42\noutput = {:?}\n",
            d.join("task3.jsonl"),
            d.join("task3_gold.txt"),
            out
        )
    };
    ExperimentConfig::from_toml(&text).expect("config parses")
}

fn artifact_bytes(dir: &Path, names: &[&String]) -> Result<Vec<Vec<u8>>, String> {
    names
        .iter()
        .map(|n| fs::read(dir.join(n)).map_err(|e| format!("{n}: {e}")))
        .collect()
}

fn end_to_end_determinism() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut summary = Vec::new();
    for task in [1u8, 3] {
        let dirs = [tmp.path().join(format!("t{task}a")), tmp.path().join(format!("t{task}b"))];
        let mut manifests = Vec::new();
        for d in &dirs {
            let cfg = config(task, d);
            let m = if task == 1 {
                run_task1(&cfg).map_err(|e| e.to_string())?.manifest
            } else {
                run_task3(&cfg).map_err(|e| e.to_string())?.manifest
            };
            manifests.push(m);
        }
        let names: Vec<&String> = manifests[0].artifacts.keys().collect();
        ensure!(
            names == manifests[1].artifacts.keys().collect::<Vec<_>>(),
            "task {task}: artifact lists differ"
        );
        let a = artifact_bytes(&dirs[0], &names)?;
        let b = artifact_bytes(&dirs[1], &names)?;
        for ((n, x), y) in names.iter().zip(&a).zip(&b) {
            ensure!(x == y, "task {task}: {n} differs between runs");
        }
        summary.push(format!("task {task}: {} artifacts", names.len()));
    }
    Ok(summary.join(", "))
}

// ------------------------------------------------------------------ main

fn main() {
    let criteria: Vec<(&str, fn() -> Check)> = vec![
        ("lexical diversity oracle", lexdiv_oracle),
        ("lexical diversity identities", lexdiv_identities),
        ("readability fixture", readability_fixture),
        ("gradient check", gradient_check),
        ("training sanity", training_sanity),
        ("early-detection metric fixtures", erde_fixtures),
        ("protocol conformance", protocol_conformance),
        ("EDE-Q fixtures", edeq_fixtures),
        ("Task 3 metric oracle", task3_oracle),
        ("end-to-end determinism", end_to_end_determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (name, check) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        let took = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  {name} ({took:.2}s): {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name} ({took:.2}s): {why}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}

//! Round-based release of writings and collection of decisions.
//!
//! Every round the server hands out the next unread post of each subject
//! that still has posts, then waits until a decision for each of them has
//! been submitted. A positive decision is final.

mod client;
mod log;
mod server;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::corpus::{format_timestamp, UserHistory};
use crate::error::{Error, Result};

pub use client::{run_client, Client, HttpTransport, InProcess, RoundTransport, Strategy};
pub use log::{DecisionLog, LogEntry};
pub use server::{serve, spawn_http, ServerHandle};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Writing {
    pub subject_id: String,
    pub round: usize,
    pub title: String,
    pub text: String,
    pub date: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionMsg {
    pub subject_id: String,
    pub decision: u8,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ack {
    pub round: usize,
}

/// Protocol state of one team.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RoundState {
    pub round: usize,
    pub pending: BTreeSet<String>,
    pub finished: BTreeSet<String>,
    /// Subject id to the round of its first positive decision.
    pub alerts: BTreeMap<String, usize>,
}

/// In-memory server shared by all teams. Each team's state sits behind
/// its own lock, so teams never block each other.
#[derive(Debug)]
pub struct StreamServer {
    corpus: Vec<UserHistory>,
    teams: HashMap<String, Mutex<RoundState>>,
}

impl StreamServer {
    pub fn new(corpus: Vec<UserHistory>, tokens: &[&str]) -> Arc<Self> {
        let mut corpus = corpus;
        corpus.sort_by(|a, b| a.subject_id.cmp(&b.subject_id));
        Arc::new(StreamServer {
            corpus,
            teams: tokens
                .iter()
                .map(|t| (t.to_string(), Mutex::new(RoundState::default())))
                .collect(),
        })
    }

    fn team(&self, token: &str) -> Result<&Mutex<RoundState>> {
        self.teams
            .get(token)
            .ok_or_else(|| Error::Auth(format!("unknown team token {token:?}")))
    }

    pub fn state(&self, token: &str) -> Result<RoundState> {
        Ok(self.team(token)?.lock().expect("team state poisoned").clone())
    }

    /// Writings of the current round; empty once every subject is exhausted.
    pub fn next_round(&self, token: &str) -> Result<Vec<Writing>> {
        let mut st = self.team(token)?.lock().expect("team state poisoned");
        if !st.pending.is_empty() {
            return Err(Error::Protocol("round incomplete".into()));
        }
        let round = st.round;
        let mut out = Vec::new();
        for h in &self.corpus {
            if st.finished.contains(&h.subject_id) {
                continue;
            }
            match h.posts.get(round) {
                Some(p) => out.push(Writing {
                    subject_id: h.subject_id.clone(),
                    round,
                    title: p.title.clone(),
                    text: p.text.clone(),
                    date: format_timestamp(&p.date),
                }),
                None => {
                    st.finished.insert(h.subject_id.clone());
                }
            }
        }
        st.pending = out.iter().map(|w| w.subject_id.clone()).collect();
        Ok(out)
    }

    /// Accept a full round of decisions. Nothing changes unless the whole
    /// submission is valid.
    pub fn submit(&self, token: &str, decisions: &[DecisionMsg]) -> Result<Ack> {
        let mut st = self.team(token)?.lock().expect("team state poisoned");
        if st.pending.is_empty() {
            return Err(Error::Protocol("no round is awaiting decisions".into()));
        }
        let mut seen = BTreeSet::new();
        for d in decisions {
            if !st.pending.contains(&d.subject_id) {
                return Err(Error::Protocol(format!(
                    "unknown subject {} for round {}",
                    d.subject_id, st.round
                )));
            }
            if !seen.insert(d.subject_id.as_str()) {
                return Err(Error::Protocol(format!("duplicate decision for {}", d.subject_id)));
            }
            if d.decision > 1 {
                return Err(Error::Protocol(format!(
                    "decision for {} must be 0 or 1, got {}",
                    d.subject_id, d.decision
                )));
            }
            if !(0.0..=1.0).contains(&d.score) {
                return Err(Error::Protocol(format!(
                    "score for {} must be in [0, 1], got {}",
                    d.subject_id, d.score
                )));
            }
            if d.decision == 0 && st.alerts.contains_key(&d.subject_id) {
                return Err(Error::Protocol(format!(
                    "alerts are final: {} was alerted in round {}",
                    d.subject_id, st.alerts[&d.subject_id]
                )));
            }
        }
        let missing: Vec<&str> = st
            .pending
            .iter()
            .map(String::as_str)
            .filter(|s| !seen.contains(s))
            .collect();
        if !missing.is_empty() {
            return Err(Error::Protocol(format!(
                "missing decisions for: {}",
                missing.join(", ")
            )));
        }
        let round = st.round;
        for d in decisions.iter().filter(|d| d.decision == 1) {
            st.alerts.entry(d.subject_id.clone()).or_insert(round);
        }
        st.pending.clear();
        st.round += 1;
        Ok(Ack { round })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{parse_timestamp, Label, RawPost};

    pub(crate) fn corpus(lens: &[(&str, usize)]) -> Vec<UserHistory> {
        lens.iter()
            .map(|(id, n)| {
                let posts = (0..*n)
                    .map(|i| RawPost {
                        date: parse_timestamp(&format!("2023-01-{:02}T00:00:00", i + 1)).unwrap(),
                        title: String::new(),
                        text: format!("{id} post {i}"),
                    })
                    .collect();
                UserHistory::new(*id, Label::Unknown, posts)
            })
            .collect()
    }

    fn all(ws: &[Writing], d: u8) -> Vec<DecisionMsg> {
        ws.iter()
            .map(|w| DecisionMsg {
                subject_id: w.subject_id.clone(),
                decision: d,
                score: f64::from(d),
            })
            .collect()
    }

    #[test]
    fn rounds_release_one_post_per_subject() {
        let s = StreamServer::new(corpus(&[("a", 2), ("b", 1)]), &["t"]);
        let w = s.next_round("t").unwrap();
        assert_eq!(w.len(), 2);
        assert_eq!(w[0].text, "a post 0");
        assert!(matches!(s.next_round("t"), Err(Error::Protocol(m)) if m == "round incomplete"));
        assert_eq!(s.submit("t", &all(&w, 0)).unwrap(), Ack { round: 0 });
        let w = s.next_round("t").unwrap();
        assert_eq!(w.len(), 1);
        s.submit("t", &all(&w, 0)).unwrap();
        assert!(s.next_round("t").unwrap().is_empty());
        let st = s.state("t").unwrap();
        assert_eq!(st.finished.len(), 2);
        assert!(st.pending.is_empty());
    }

    #[test]
    fn submission_errors() {
        let s = StreamServer::new(corpus(&[("a", 5), ("b", 5)]), &["t", "u"]);
        assert!(matches!(s.next_round("x"), Err(Error::Auth(_))));
        let w = s.next_round("t").unwrap();
        let err = s.submit("t", &all(&w[..1], 0)).unwrap_err().to_string();
        assert!(err.contains("missing decisions for: b"), "{err}");
        let mut bad = all(&w, 0);
        bad[0].subject_id = "zz".into();
        assert!(s.submit("t", &bad).is_err());
        s.submit("t", &all(&w, 1)).unwrap();
        let w = s.next_round("t").unwrap();
        let err = s.submit("t", &all(&w, 0)).unwrap_err().to_string();
        assert!(err.contains("alerts are final"), "{err}");
        // the rejected submission changed nothing
        assert_eq!(s.state("t").unwrap().round, 1);
        // another team is unaffected
        assert_eq!(s.next_round("u").unwrap().len(), 2);
    }
}

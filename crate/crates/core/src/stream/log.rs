use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub round: usize,
    pub decision: u8,
    pub score: f64,
}

#[derive(Serialize, Deserialize)]
struct CsvRow {
    subject_id: String,
    round: usize,
    decision: u8,
    score: f64,
}

/// Per-subject decisions in round order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DecisionLog {
    entries: BTreeMap<String, Vec<LogEntry>>,
}

impl DecisionLog {
    /// Append, enforcing increasing rounds and alert finality.
    pub fn push(&mut self, subject: &str, entry: LogEntry) -> Result<()> {
        if entry.decision > 1 {
            return Err(Error::Protocol(format!(
                "decision for {subject} must be 0 or 1, got {}",
                entry.decision
            )));
        }
        let list = self.entries.entry(subject.to_string()).or_default();
        if let Some(last) = list.last() {
            if entry.round <= last.round {
                return Err(Error::Protocol(format!(
                    "round {} for {subject} does not follow round {}",
                    entry.round, last.round
                )));
            }
            if last.decision == 1 && entry.decision == 0 {
                return Err(Error::Protocol(format!(
                    "alerts are final: {subject} was already alerted"
                )));
            }
        }
        list.push(entry);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Subject ids in ascending order.
    pub fn subjects(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn entries(&self, subject: &str) -> &[LogEntry] {
        self.entries.get(subject).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Round of the first positive decision.
    pub fn first_alert(&self, subject: &str) -> Option<usize> {
        self.entries(subject)
            .iter()
            .find(|e| e.decision == 1)
            .map(|e| e.round)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::Validation(format!("{}: {other:?}", path.display())),
        })?;
        for (subject, list) in &self.entries {
            for e in list {
                w.serialize(CsvRow {
                    subject_id: subject.clone(),
                    round: e.round,
                    decision: e.decision,
                    score: e.score,
                })?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut r = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::Validation(format!("{}: {other:?}", path.display())),
        })?;
        let mut log = DecisionLog::default();
        for row in r.deserialize() {
            let row: CsvRow = row?;
            log.push(
                &row.subject_id,
                LogEntry {
                    round: row.round,
                    decision: row.decision,
                    score: row.score,
                },
            )
            .map_err(|e| Error::Validation(format!("{}: {e}", path.display())))?;
        }
        Ok(log)
    }
}

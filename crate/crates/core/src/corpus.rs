//! User post histories: ingestion from JSONL and eRisk-style XML, plus
//! the two windowing rules used downstream (last N posts, last D days).

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use chrono::{DateTime, Duration, NaiveDateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const PLAIN_FORMAT: &str = "%Y-%m-%d %H:%M:%S";

/// Parse `YYYY-MM-DD HH:MM:SS` (the eRisk writing format) or ISO-8601.
/// Values without an offset are taken as UTC.
pub fn parse_timestamp(raw: &str) -> Option<DateTime<Utc>> {
    let raw = raw.trim();
    if let Ok(dt) = NaiveDateTime::parse_from_str(raw, PLAIN_FORMAT) {
        return Some(dt.and_utc());
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(raw) {
        return Some(dt.with_timezone(&Utc));
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(raw, fmt) {
            return Some(dt.and_utc());
        }
    }
    None
}

pub fn format_timestamp(ts: &DateTime<Utc>) -> String {
    ts.format(PLAIN_FORMAT).to_string()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Positive,
    Negative,
    Unknown,
}

impl Label {
    pub fn from_code(code: Option<u8>) -> Option<Label> {
        match code {
            Some(1) => Some(Label::Positive),
            Some(0) => Some(Label::Negative),
            None => Some(Label::Unknown),
            Some(_) => None,
        }
    }

    pub fn code(self) -> Option<u8> {
        match self {
            Label::Positive => Some(1),
            Label::Negative => Some(0),
            Label::Unknown => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Post {
    pub date: DateTime<Utc>,
    pub title: String,
    pub text: String,
    pub round_index: usize,
}

impl Post {
    /// Title and body joined by a single space, skipping empty parts.
    pub fn full_text(&self) -> String {
        match (self.title.trim().is_empty(), self.text.trim().is_empty()) {
            (true, _) => self.text.trim().to_string(),
            (false, true) => self.title.trim().to_string(),
            (false, false) => format!("{} {}", self.title.trim(), self.text.trim()),
        }
    }
}

/// A writing before it is placed in a history.
#[derive(Debug, Clone, PartialEq)]
pub struct RawPost {
    pub date: DateTime<Utc>,
    pub title: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserHistory {
    pub subject_id: String,
    pub label: Label,
    pub posts: Vec<Post>,
}

impl UserHistory {
    /// Sort posts chronologically (stable, so ties keep input order) and
    /// assign round indices.
    pub fn new(subject_id: impl Into<String>, label: Label, raw: Vec<RawPost>) -> Self {
        let mut raw = raw;
        raw.sort_by_key(|p| p.date);
        let posts = raw
            .into_iter()
            .enumerate()
            .map(|(i, p)| Post {
                date: p.date,
                title: p.title,
                text: p.text,
                round_index: i,
            })
            .collect();
        UserHistory {
            subject_id: subject_id.into(),
            label,
            posts,
        }
    }

    pub fn newest_date(&self) -> Option<DateTime<Utc>> {
        self.posts.last().map(|p| p.date)
    }

    /// The first `n` posts, as seen by a stream consumer after `n` rounds.
    pub fn prefix(&self, n: usize) -> UserHistory {
        UserHistory {
            subject_id: self.subject_id.clone(),
            label: self.label,
            posts: self.posts[..n.min(self.posts.len())].to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Selection {
    LastN(usize),
    LastDays { days: u32, reference: DateTime<Utc> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PostWindow {
    pub subject_id: String,
    pub posts: Vec<Post>,
    pub selection: Selection,
}

impl PostWindow {
    pub fn is_empty(&self) -> bool {
        self.posts.is_empty()
    }

    pub fn len(&self) -> usize {
        self.posts.len()
    }
}

/// The `min(n, len)` most recent posts, oldest first.
pub fn select_last_n(history: &UserHistory, n: usize) -> Result<PostWindow> {
    if n == 0 {
        return Err(Error::Domain("window size must be at least 1".into()));
    }
    let start = history.posts.len().saturating_sub(n);
    Ok(PostWindow {
        subject_id: history.subject_id.clone(),
        posts: history.posts[start..].to_vec(),
        selection: Selection::LastN(n),
    })
}

/// Posts dated within `[reference - days*24h, reference]`, both ends
/// inclusive. `reference` defaults to the newest post's date.
pub fn select_last_days(
    history: &UserHistory,
    days: u32,
    reference: Option<DateTime<Utc>>,
) -> Result<PostWindow> {
    if days == 0 {
        return Err(Error::Domain("day window must be at least 1".into()));
    }
    let reference = reference
        .or_else(|| history.newest_date())
        .unwrap_or(DateTime::<Utc>::UNIX_EPOCH);
    let lower = reference - Duration::hours(24 * i64::from(days));
    let posts = history
        .posts
        .iter()
        .filter(|p| p.date >= lower && p.date <= reference)
        .cloned()
        .collect();
    Ok(PostWindow {
        subject_id: history.subject_id.clone(),
        posts,
        selection: Selection::LastDays { days, reference },
    })
}

#[derive(Debug, Deserialize)]
struct JsonlRecord {
    subject: String,
    label: Option<u8>,
    posts: Vec<JsonlPost>,
}

#[derive(Debug, Serialize, Deserialize)]
struct JsonlPost {
    date: String,
    #[serde(default)]
    title: String,
    #[serde(default)]
    text: String,
}

#[derive(Serialize)]
struct JsonlRecordOut<'a> {
    subject: &'a str,
    label: Option<u8>,
    posts: Vec<JsonlPost>,
}

fn finish(histories: Vec<UserHistory>) -> Result<Vec<UserHistory>> {
    let mut seen = HashSet::new();
    for h in &histories {
        if !seen.insert(h.subject_id.as_str()) {
            return Err(Error::Validation(format!(
                "duplicate subject_id {}",
                h.subject_id
            )));
        }
    }
    let mut histories = histories;
    histories.sort_by(|a, b| a.subject_id.cmp(&b.subject_id));
    Ok(histories)
}

/// Read a corpus with one JSON object per line.
pub fn ingest_jsonl(path: impl AsRef<Path>) -> Result<Vec<UserHistory>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut histories = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: JsonlRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let label = Label::from_code(record.label).ok_or_else(|| Error::Parse {
            line: line_no,
            message: format!("label must be 0, 1 or null, got {:?}", record.label),
        })?;
        let mut raw = Vec::with_capacity(record.posts.len());
        for (i, p) in record.posts.into_iter().enumerate() {
            let date = parse_timestamp(&p.date).ok_or_else(|| Error::Parse {
                line: line_no,
                message: format!("post {i}: unparseable date {:?}", p.date),
            })?;
            raw.push(RawPost {
                date,
                title: p.title,
                text: p.text,
            });
        }
        histories.push(UserHistory::new(record.subject, label, raw));
    }
    finish(histories)
}

pub fn write_jsonl(path: impl AsRef<Path>, histories: &[UserHistory]) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for h in histories {
        let rec = JsonlRecordOut {
            subject: &h.subject_id,
            label: h.label.code(),
            posts: h
                .posts
                .iter()
                .map(|p| JsonlPost {
                    date: format_timestamp(&p.date),
                    title: p.title.clone(),
                    text: p.text.clone(),
                })
                .collect(),
        };
        serde_json::to_writer(&mut out, &rec)?;
        out.push(b'\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Read a golden-truth file of whitespace-separated `subject_id label` lines.
pub fn read_golden_truth(path: impl AsRef<Path>) -> Result<HashMap<String, u8>> {
    let path = path.as_ref();
    let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut map = HashMap::new();
    for (idx, line) in content.lines().enumerate() {
        let mut parts = line.split_whitespace();
        let (Some(id), Some(label)) = (parts.next(), parts.next()) else {
            if line.trim().is_empty() {
                continue;
            }
            return Err(Error::Parse {
                line: idx + 1,
                message: "expected `subject_id label`".into(),
            });
        };
        let label = match label {
            "0" => 0,
            "1" => 1,
            other => {
                return Err(Error::Parse {
                    line: idx + 1,
                    message: format!("label must be 0 or 1, got {other:?}"),
                })
            }
        };
        map.insert(id.to_string(), label);
    }
    Ok(map)
}

fn child_text<'a>(node: roxmltree::Node<'a, 'a>, tag: &str) -> Option<&'a str> {
    node.children()
        .find(|c| c.is_element() && c.tag_name().name().eq_ignore_ascii_case(tag))
        .map(|c| c.text().unwrap_or(""))
}

fn parse_xml_subject(path: &Path) -> Result<(String, Vec<RawPost>)> {
    let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let doc = roxmltree::Document::parse(&content).map_err(|e| {
        Error::Validation(format!("{}: malformed XML: {e}", path.display()))
    })?;
    let root = doc.root_element();
    let id = child_text(root, "ID")
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .ok_or_else(|| Error::Validation(format!("{}: missing ID element", path.display())))?;
    let mut raw = Vec::new();
    let writings = root
        .children()
        .filter(|c| c.is_element() && c.tag_name().name().eq_ignore_ascii_case("WRITING"));
    for (i, w) in writings.enumerate() {
        let date_raw = child_text(w, "DATE").ok_or_else(|| {
            Error::Validation(format!("{}: WRITING {i} lacks a DATE element", path.display()))
        })?;
        let date = parse_timestamp(date_raw).ok_or_else(|| {
            Error::Validation(format!(
                "{}: WRITING {i} has unparseable DATE {:?}",
                path.display(),
                date_raw.trim()
            ))
        })?;
        raw.push(RawPost {
            date,
            title: child_text(w, "TITLE").unwrap_or("").trim().to_string(),
            text: child_text(w, "TEXT").unwrap_or("").trim().to_string(),
        });
    }
    Ok((id, raw))
}

/// Read a directory of per-subject XML writings files. Labels come from the
/// optional golden-truth file; subjects absent from it stay `Unknown`.
pub fn ingest_erisk_xml(
    dir: impl AsRef<Path>,
    golden_truth: Option<&Path>,
) -> Result<Vec<UserHistory>> {
    let dir = dir.as_ref();
    let gold = golden_truth.map(read_golden_truth).transpose()?;
    let mut files: Vec<_> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .is_some_and(|ext| ext.eq_ignore_ascii_case("xml"))
        })
        .collect();
    files.sort();
    let mut histories = Vec::with_capacity(files.len());
    for path in files {
        let (id, raw) = parse_xml_subject(&path)?;
        let label = match gold.as_ref().and_then(|g| g.get(&id)) {
            Some(1) => Label::Positive,
            Some(_) => Label::Negative,
            None => Label::Unknown,
        };
        histories.push(UserHistory::new(id, label, raw));
    }
    finish(histories)
}

/// Binary gold labels for every labelled subject.
pub fn gold_labels(histories: &[UserHistory]) -> BTreeMap<String, u8> {
    histories
        .iter()
        .filter_map(|h| h.label.code().map(|c| (h.subject_id.clone(), c)))
        .collect()
}

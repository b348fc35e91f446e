//! Handcrafted feature vector: preprocessing, volumetry, assembly of the
//! fixed 79-slot layout, and min-max scaling.
//!
//! Layout: volumetry (6 scalars + 19 POS counts) | lexical diversity (8) |
//! readability (12) | emotions (6 basic + 28 fine).

use std::collections::HashSet;
use std::fs;
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::annotate::{AnnotatedDoc, AnnotatorRegistry, Pos};
use crate::corpus::PostWindow;
use crate::emotion::{EmotionScores, BASIC_LABELS, FINE_LABELS};
use crate::error::{Error, Result};
use crate::lexdiv::{self, LexDivConfig, LexDivScores};
use crate::readability::{self, FormulaRegistry, ReadabilityScores, METRIC_NAMES};

pub const VOLUMETRY_DIM: usize = 6 + Pos::COUNT;
pub const LEXDIV_DIM: usize = 8;
pub const READABILITY_DIM: usize = 12;
pub const EMOTION_DIM: usize = 6 + 28;
pub const FEATURE_DIM: usize = VOLUMETRY_DIM + LEXDIV_DIM + READABILITY_DIM + EMOTION_DIM;

const _: () = assert!(FEATURE_DIM == 79);

/// Column names in layout order.
pub fn feature_names() -> &'static [String] {
    static NAMES: OnceLock<Vec<String>> = OnceLock::new();
    NAMES.get_or_init(|| {
        let mut names: Vec<String> = [
            "n_words",
            "n_unique_words",
            "n_chars",
            "avg_word_len",
            "n_unique_lemmas",
            "avg_lemma_len",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        names.extend(Pos::ALL.iter().map(|p| format!("pos_{}", p.name())));
        names.extend(LexDivScores::NAMES.iter().map(|s| s.to_string()));
        names.extend(METRIC_NAMES.iter().map(|s| s.to_string()));
        names.extend(BASIC_LABELS.iter().map(|s| format!("emo_{s}")));
        names.extend(FINE_LABELS.iter().map(|s| format!("goemo_{s}")));
        names
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preprocess {
    #[default]
    None,
    StripUrls,
}

fn url_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)(?:https?://|www\.)\S+").unwrap())
}

/// Byte ranges of balanced `(...)` / `[...]` spans whose content holds a URL.
fn url_bracket_spans(text: &str) -> Vec<(usize, usize)> {
    let url = url_pattern();
    let mut stack: Vec<(char, usize)> = Vec::new();
    let mut spans = Vec::new();
    for (i, c) in text.char_indices() {
        match c {
            '(' | '[' => stack.push((c, i)),
            ')' | ']' => {
                let open = if c == ')' { '(' } else { '[' };
                if let Some(pos) = stack.iter().rposition(|(o, _)| *o == open) {
                    let (_, start) = stack[pos];
                    stack.truncate(pos);
                    if url.is_match(&text[start + 1..i]) {
                        spans.push((start, i + 1));
                    }
                }
            }
            _ => {}
        }
    }
    spans
}

/// Remove URLs, and any parenthesised or bracketed span that contains one
/// (delimiters included), then collapse whitespace.
pub fn strip_urls(text: &str) -> String {
    let mut drop = vec![false; text.len()];
    for (a, b) in url_bracket_spans(text) {
        drop[a..b].iter_mut().for_each(|d| *d = true);
    }
    let mut kept = String::with_capacity(text.len());
    for (i, c) in text.char_indices() {
        kept.push(if drop[i] { ' ' } else { c });
    }
    let out = url_pattern().replace_all(&kept, " ");
    out.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn preprocess(text: &str, mode: Preprocess) -> String {
    match mode {
        Preprocess::None => text.to_string(),
        Preprocess::StripUrls => strip_urls(text),
    }
}

/// Join title and body of every post, oldest first, with single spaces.
pub fn concat_window(window: &PostWindow, mode: Preprocess) -> String {
    window
        .posts
        .iter()
        .map(|p| preprocess(&p.full_text(), mode))
        .filter(|t| !t.trim().is_empty())
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct VolumetryScores {
    pub n_words: usize,
    pub n_unique_words: usize,
    pub n_chars: usize,
    pub avg_word_len: f64,
    pub n_unique_lemmas: usize,
    pub avg_lemma_len: f64,
    pub pos_counts: [usize; Pos::COUNT],
}

impl VolumetryScores {
    fn to_array(&self) -> [f64; VOLUMETRY_DIM] {
        let mut out = [0.0; VOLUMETRY_DIM];
        out[0] = self.n_words as f64;
        out[1] = self.n_unique_words as f64;
        out[2] = self.n_chars as f64;
        out[3] = self.avg_word_len;
        out[4] = self.n_unique_lemmas as f64;
        out[5] = self.avg_lemma_len;
        for (slot, c) in out[6..].iter_mut().zip(self.pos_counts) {
            *slot = c as f64;
        }
        out
    }
}

pub fn volumetry(doc: &AnnotatedDoc) -> VolumetryScores {
    let words: Vec<_> = doc.words().collect();
    let mut pos_counts = [0usize; Pos::COUNT];
    for t in &doc.tokens {
        pos_counts[t.pos.index()] += 1;
    }
    let unique_words: HashSet<String> = words.iter().map(|t| t.surface.to_lowercase()).collect();
    let unique_lemmas: HashSet<&str> = words.iter().map(|t| t.lemma.as_str()).collect();
    let mean = |xs: &mut dyn Iterator<Item = usize>| {
        let (sum, n) = xs.fold((0usize, 0usize), |(s, n), x| (s + x, n + 1));
        if n == 0 {
            0.0
        } else {
            sum as f64 / n as f64
        }
    };
    VolumetryScores {
        n_words: words.len(),
        n_unique_words: unique_words.len(),
        n_chars: doc.tokens.iter().map(|t| t.surface.chars().count()).sum(),
        avg_word_len: mean(&mut words.iter().map(|t| t.surface.chars().count())),
        n_unique_lemmas: unique_lemmas.len(),
        avg_lemma_len: mean(&mut words.iter().map(|t| t.lemma.chars().count())),
        pos_counts,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    /// Slots whose input was not finite and were replaced by 0.
    pub replaced: Vec<usize>,
}

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone, Default)]
pub struct FeatureParts {
    pub volumetry: Option<VolumetryScores>,
    pub lexdiv: Option<LexDivScores>,
    pub readability: Option<ReadabilityScores>,
    pub emotions: Option<EmotionScores>,
}

/// Concatenate the four parts in layout order.
pub fn assemble(parts: &FeatureParts) -> Result<FeatureVector> {
    let v = parts.volumetry.as_ref().ok_or(Error::Assembly("volumetry"))?;
    let l = parts.lexdiv.as_ref().ok_or(Error::Assembly("lexdiv"))?;
    let r = parts.readability.as_ref().ok_or(Error::Assembly("readability"))?;
    let e = parts.emotions.as_ref().ok_or(Error::Assembly("emotions"))?;
    let mut values = Vec::with_capacity(FEATURE_DIM);
    values.extend(v.to_array());
    values.extend(l.to_array());
    values.extend(r.to_array());
    values.extend(e.values());
    debug_assert_eq!(values.len(), FEATURE_DIM);
    let mut replaced = Vec::new();
    for (i, x) in values.iter_mut().enumerate() {
        if !x.is_finite() {
            *x = 0.0;
            replaced.push(i);
        }
    }
    Ok(FeatureVector { values, replaced })
}

/// Annotation, lexical diversity and readability settings for one run.
#[derive(Clone)]
pub struct FeatureExtractor {
    pub annotators: AnnotatorRegistry,
    pub annotator: String,
    pub lexdiv: LexDivConfig,
    pub registry: FormulaRegistry,
}

impl Default for FeatureExtractor {
    fn default() -> Self {
        FeatureExtractor {
            annotators: AnnotatorRegistry::default(),
            annotator: "builtin".into(),
            lexdiv: LexDivConfig::default(),
            registry: FormulaRegistry::bundled(),
        }
    }
}

impl FeatureExtractor {
    /// Build the 79-vector for a document. Measures undefined on the text
    /// (e.g. no words) become NaN and are zeroed and flagged by
    /// [`assemble`].
    pub fn extract(&self, text: &str, emotions: EmotionScores) -> Result<FeatureVector> {
        let doc = self.annotators.annotate(text, &self.annotator)?;
        let lex = match lexdiv::lexdiv(&doc.word_forms(), &self.lexdiv) {
            Ok(s) => s,
            Err(Error::Domain(_)) => nan_lexdiv(),
            Err(e) => return Err(e),
        };
        let read = match readability::readability(&doc, &self.registry) {
            Ok(s) => s,
            Err(Error::Domain(_)) => nan_readability(),
            Err(e) => return Err(e),
        };
        assemble(&FeatureParts {
            volumetry: Some(volumetry(&doc)),
            lexdiv: Some(lex),
            readability: Some(read),
            emotions: Some(emotions),
        })
    }
}

fn nan_lexdiv() -> LexDivScores {
    LexDivScores {
        ttr: f64::NAN,
        root_ttr: f64::NAN,
        log_ttr: f64::NAN,
        maas: f64::NAN,
        msttr: f64::NAN,
        mattr: f64::NAN,
        hdd: f64::NAN,
        mtld: f64::NAN,
    }
}

fn nan_readability() -> ReadabilityScores {
    ReadabilityScores {
        lexical_complexity: f64::NAN,
        spaulding: f64::NAN,
        sentence_complexity: f64::NAN,
        ari: f64::NAN,
        dep_tree_height_mean: f64::NAN,
        punctuation_marks: f64::NAN,
        fernandez_huerta: f64::NAN,
        flesch_szigriszt: f64::NAN,
        gutierrez: f64::NAN,
        mu_readability: f64::NAN,
        min_age: f64::NAN,
        sol: f64::NAN,
    }
}

/// Per-dimension min-max scaler.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

pub fn fit_scaler(train: &[FeatureVector]) -> Result<Scaler> {
    let first = train
        .first()
        .ok_or_else(|| Error::Domain("cannot fit a scaler on no vectors".into()))?;
    let dim = first.len();
    let mut min = first.values.clone();
    let mut max = first.values.clone();
    for v in &train[1..] {
        if v.len() != dim {
            return Err(Error::Domain("training vectors differ in width".into()));
        }
        for i in 0..dim {
            min[i] = min[i].min(v.values[i]);
            max[i] = max[i].max(v.values[i]);
        }
    }
    Ok(Scaler { min, max })
}

impl Scaler {
    pub fn apply(&self, v: &FeatureVector) -> Result<FeatureVector> {
        if v.len() != self.min.len() {
            return Err(Error::Domain(format!(
                "scaler width {} does not match vector width {}",
                self.min.len(),
                v.len()
            )));
        }
        let values = v
            .values
            .iter()
            .zip(self.min.iter().zip(&self.max))
            .map(|(&x, (&lo, &hi))| {
                if hi > lo {
                    ((x - lo) / (hi - lo)).clamp(0.0, 1.0)
                } else {
                    0.0
                }
            })
            .collect();
        Ok(FeatureVector {
            values,
            replaced: v.replaced.clone(),
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string(self)?;
        fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Scaler> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let s: Scaler = serde_json::from_str(&text)?;
        if s.min.len() != s.max.len() || s.min.iter().zip(&s.max).any(|(a, b)| a > b) {
            return Err(Error::Validation(format!("{}: inconsistent scaler", path.display())));
        }
        Ok(s)
    }
}

pub fn apply_scaler(s: &Scaler, v: &FeatureVector) -> Result<FeatureVector> {
    s.apply(v)
}

/// Write `subject_id` plus the 79 named columns.
pub fn write_feature_csv(path: impl AsRef<Path>, rows: &[(String, FeatureVector)]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["subject_id".to_string()];
    header.extend(feature_names().iter().cloned());
    w.write_record(&header)?;
    for (id, v) in rows {
        let mut rec = vec![id.clone()];
        rec.extend(v.values.iter().map(|x| format!("{x}")));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_feature_csv(path: impl AsRef<Path>) -> Result<Vec<(String, FeatureVector)>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.clone();
    let expected: Vec<&str> = std::iter::once("subject_id")
        .chain(feature_names().iter().map(String::as_str))
        .collect();
    if header.iter().collect::<Vec<_>>() != expected {
        return Err(Error::Validation(format!(
            "{}: header does not match the 79-column feature layout",
            path.display()
        )));
    }
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let values = rec
            .iter()
            .skip(1)
            .map(|s| {
                s.parse::<f64>().map_err(|e| Error::Parse {
                    line: i + 2,
                    message: e.to_string(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push((
            rec[0].to_string(),
            FeatureVector {
                values,
                replaced: Vec::new(),
            },
        ));
    }
    Ok(rows)
}

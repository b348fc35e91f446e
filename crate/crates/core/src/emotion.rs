//! Per-document emotion score vectors: 6 basic emotions plus the 28-label
//! fine-grained set.

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::embed::{Document, HashEmbedder};
use crate::error::{Error, Result};
use crate::http::JsonClient;

pub const BASIC_LABELS: [&str; 6] = ["sadness", "joy", "love", "anger", "fear", "surprise"];

pub const FINE_LABELS: [&str; 28] = [
    "admiration",
    "amusement",
    "anger",
    "annoyance",
    "approval",
    "caring",
    "confusion",
    "curiosity",
    "desire",
    "disappointment",
    "disapproval",
    "disgust",
    "embarrassment",
    "excitement",
    "fear",
    "gratitude",
    "grief",
    "joy",
    "love",
    "nervousness",
    "optimism",
    "pride",
    "realization",
    "relief",
    "remorse",
    "sadness",
    "surprise",
    "neutral",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmotionScores {
    pub basic: [f64; 6],
    pub fine: [f64; 28],
}

impl EmotionScores {
    pub fn validate(&self) -> Result<()> {
        let ok = self
            .basic
            .iter()
            .chain(self.fine.iter())
            .all(|v| (0.0..=1.0).contains(v));
        if ok {
            Ok(())
        } else {
            Err(Error::Validation("emotion scores must lie in [0, 1]".into()))
        }
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.basic.iter().chain(self.fine.iter()).copied()
    }

    fn from_vecs(basic: &[f64], fine: &[f64]) -> Result<Self> {
        let basic: [f64; 6] = basic.try_into().map_err(|_| {
            Error::Validation(format!("expected 6 basic emotion scores, got {}", basic.len()))
        })?;
        let fine: [f64; 28] = fine.try_into().map_err(|_| {
            Error::Validation(format!("expected 28 fine emotion scores, got {}", fine.len()))
        })?;
        let s = EmotionScores { basic, fine };
        s.validate()?;
        Ok(s)
    }
}

pub trait EmotionProvider: Send + Sync {
    fn id(&self) -> &str;

    fn score_batch(&self, docs: &[Document]) -> Result<Vec<EmotionScores>>;

    fn score(&self, doc: &Document) -> Result<EmotionScores> {
        let mut out = self.score_batch(std::slice::from_ref(doc))?;
        Ok(out.pop().expect("one score vector per document"))
    }
}

fn cue_words(label: &str) -> &'static str {
    match label {
        "sadness" => "sad cry crying lonely depressed miss hurt unhappy down tears",
        "joy" => "happy glad great awesome fun enjoy joy excited yay",
        "love" => "love loved lovely adore sweet dear care heart",
        "anger" => "angry mad hate furious annoyed rage pissed",
        "fear" => "afraid scared fear worried anxious nervous panic terrified",
        "surprise" => "surprised wow shocked unexpected amazing suddenly",
        "admiration" => "admire impressive amazing respect brilliant",
        "amusement" => "lol haha funny hilarious laugh",
        "annoyance" => "annoying annoyed irritating ugh",
        "approval" => "agree yes right approve correct",
        "caring" => "care hope okay support help",
        "confusion" => "confused understand why what unclear",
        "curiosity" => "wonder curious how interesting question",
        "desire" => "want wish need crave desire",
        "disappointment" => "disappointed letdown failed sadly",
        "disapproval" => "wrong disagree not bad shouldn't",
        "disgust" => "disgusting gross sick eww",
        "embarrassment" => "embarrassed ashamed awkward shame",
        "excitement" => "excited can't wait thrilled pumped",
        "gratitude" => "thanks thank grateful appreciate",
        "grief" => "grief loss died mourning funeral",
        "nervousness" => "nervous anxious stressed tense",
        "optimism" => "hope better future optimistic will",
        "pride" => "proud accomplished achievement",
        "realization" => "realized realize noticed understand",
        "relief" => "relief relieved finally phew",
        "remorse" => "sorry regret apologize guilty",
        "neutral" => "the a is it and of to",
        _ => "",
    }
}

/// Deterministic stand-in for the emotion classifiers: similarity of the
/// hashed document to hashed cue-word lists, softmaxed for the basic set and
/// clamped cosines for the fine set.
#[derive(Debug, Clone)]
pub struct HashEmotions {
    hasher: HashEmbedder,
    basic_protos: Vec<Vec<f64>>,
    fine_protos: Vec<Vec<f64>>,
}

impl Default for HashEmotions {
    fn default() -> Self {
        let hasher = HashEmbedder::new(256, 512).expect("valid dims");
        let proto = |l: &&str| hasher.vector(cue_words(l));
        HashEmotions {
            basic_protos: BASIC_LABELS.iter().map(proto).collect(),
            fine_protos: FINE_LABELS.iter().map(proto).collect(),
            hasher,
        }
    }
}

impl HashEmotions {
    fn score_text(&self, text: &str) -> EmotionScores {
        let v = self.hasher.vector(text);
        let dot = |p: &Vec<f64>| v.iter().zip(p).map(|(a, b)| a * b).sum::<f64>();
        let logits: Vec<f64> = self.basic_protos.iter().map(|p| 8.0 * dot(p)).collect();
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        let mut basic = [0.0; 6];
        for (b, e) in basic.iter_mut().zip(&exps) {
            *b = e / z;
        }
        let mut fine = [0.0; 28];
        for (f, p) in fine.iter_mut().zip(&self.fine_protos) {
            *f = dot(p).clamp(0.0, 1.0);
        }
        EmotionScores { basic, fine }
    }
}

impl EmotionProvider for HashEmotions {
    fn id(&self) -> &str {
        "test_hash"
    }

    fn score_batch(&self, docs: &[Document]) -> Result<Vec<EmotionScores>> {
        Ok(docs.iter().map(|d| self.score_text(&d.text)).collect())
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EmotionCacheLine {
    pub doc_id: String,
    pub basic: Vec<f64>,
    pub fine: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct EmotionFileCache {
    scores: HashMap<String, EmotionScores>,
}

impl EmotionFileCache {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut scores = HashMap::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: EmotionCacheLine = serde_json::from_str(&line).map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            scores.insert(rec.doc_id, EmotionScores::from_vecs(&rec.basic, &rec.fine)?);
        }
        Ok(EmotionFileCache { scores })
    }
}

impl EmotionProvider for EmotionFileCache {
    fn id(&self) -> &str {
        "file_cache"
    }

    fn score_batch(&self, docs: &[Document]) -> Result<Vec<EmotionScores>> {
        docs.iter()
            .map(|d| {
                self.scores
                    .get(&d.id)
                    .cloned()
                    .ok_or_else(|| Error::Lookup(d.id.clone()))
            })
            .collect()
    }
}

#[derive(Serialize)]
struct EmotionRequest<'a> {
    texts: Vec<&'a str>,
}

#[derive(Deserialize)]
struct EmotionResponse {
    basic: Vec<Vec<f64>>,
    fine: Vec<Vec<f64>>,
}

/// Client for a remote `/emotions` endpoint.
#[derive(Debug)]
pub struct HttpEmotions {
    client: JsonClient,
    batch_size: usize,
}

impl HttpEmotions {
    pub fn new(url: &str, token: Option<String>, batch_size: usize, max_in_flight: usize) -> Self {
        HttpEmotions {
            client: JsonClient::new(url, token, max_in_flight),
            batch_size: batch_size.max(1),
        }
    }
}

impl EmotionProvider for HttpEmotions {
    fn id(&self) -> &str {
        "http_client"
    }

    fn score_batch(&self, docs: &[Document]) -> Result<Vec<EmotionScores>> {
        let mut out = Vec::with_capacity(docs.len());
        for chunk in docs.chunks(self.batch_size) {
            let req = EmotionRequest {
                texts: chunk.iter().map(|d| d.text.as_str()).collect(),
            };
            let resp: EmotionResponse = self.client.post("/emotions", &req)?;
            if resp.basic.len() != chunk.len() || resp.fine.len() != chunk.len() {
                return Err(Error::Transport {
                    status: None,
                    message: "/emotions returned the wrong number of rows".into(),
                });
            }
            for (b, f) in resp.basic.iter().zip(&resp.fine) {
                out.push(EmotionScores::from_vecs(b, f).map_err(|e| Error::Transport {
                    status: None,
                    message: e.to_string(),
                })?);
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EmotionConfig {
    TestHash,
    FileCache {
        path: PathBuf,
    },
    HttpClient {
        url: String,
        #[serde(default)]
        token: Option<String>,
        #[serde(default = "default_batch")]
        batch_size: usize,
        #[serde(default = "default_in_flight")]
        max_in_flight: usize,
    },
}

fn default_batch() -> usize {
    16
}
fn default_in_flight() -> usize {
    4
}

impl Default for EmotionConfig {
    fn default() -> Self {
        EmotionConfig::TestHash
    }
}

impl EmotionConfig {
    pub fn build(&self) -> Result<Box<dyn EmotionProvider>> {
        Ok(match self {
            EmotionConfig::TestHash => Box::new(HashEmotions::default()),
            EmotionConfig::FileCache { path } => Box::new(EmotionFileCache::load(path)?),
            EmotionConfig::HttpClient {
                url,
                token,
                batch_size,
                max_in_flight,
            } => Box::new(HttpEmotions::new(url, token.clone(), *batch_size, *max_in_flight)),
        })
    }
}

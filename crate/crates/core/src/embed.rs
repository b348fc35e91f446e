//! Sentence embeddings behind interchangeable providers, and cosine
//! similarity.
//!
//! Providers: a deterministic hashing embedder for tests and offline runs,
//! a JSONL file cache produced by the inference sidecar's batch export,
//! and an HTTP client for the sidecar's `/embed` endpoint.

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::http::JsonClient;

pub const DEFAULT_ENCODER_DIM: usize = 1024;
pub const DEFAULT_TRUNCATION: usize = 512;

/// A text to embed together with the key used by caches.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub id: String,
    pub text: String,
}

impl Document {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Document {
            id: id.into(),
            text: text.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub vector: Vec<f64>,
    pub provider_id: String,
    /// Set when the provider had nothing to encode (all-zero vector).
    pub degenerate: bool,
}

impl Embedding {
    pub fn dim(&self) -> usize {
        self.vector.len()
    }

    fn norm(&self) -> f64 {
        self.vector.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

/// Cosine similarity, clamped to [-1, 1] against rounding.
pub fn cosine(a: &Embedding, b: &Embedding) -> Result<f64> {
    cosine_slices(&a.vector, &b.vector).and_then(|c| {
        if a.norm() == 0.0 || b.norm() == 0.0 {
            Err(Error::Domain("cosine of a zero vector".into()))
        } else {
            Ok(c)
        }
    })
}

pub fn cosine_slices(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Domain(format!(
            "cosine of vectors with different widths ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::Domain("cosine of a zero vector".into()));
    }
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

pub trait EmbeddingProvider: Send + Sync {
    fn id(&self) -> &str;

    fn dim(&self) -> usize;

    fn embed_batch(&self, docs: &[Document]) -> Result<Vec<Embedding>>;

    fn embed(&self, doc: &Document) -> Result<Embedding> {
        let mut out = self.embed_batch(std::slice::from_ref(doc))?;
        Ok(out.pop().expect("one embedding per document"))
    }
}

/// Keep the first `limit` whitespace tokens.
pub fn truncate_tokens(text: &str, limit: usize) -> String {
    text.split_whitespace()
        .take(limit)
        .collect::<Vec<_>>()
        .join(" ")
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a. Stable across processes and platforms.
pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, b| (h ^ u64::from(*b)).wrapping_mul(FNV_PRIME))
}

/// Deterministic bag-of-features embedder: lowercased word unigrams and
/// word-internal character trigrams hashed into `dim` buckets, then
/// L2-normalized.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    dim: usize,
    truncation: usize,
}

impl HashEmbedder {
    pub fn new(dim: usize, truncation: usize) -> Result<Self> {
        if dim == 0 || truncation == 0 {
            return Err(Error::Config("encoder_dim and truncation must be positive".into()));
        }
        Ok(HashEmbedder { dim, truncation })
    }

    pub fn vector(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        let text = truncate_tokens(text, self.truncation);
        let words = text
            .split(|c: char| !c.is_alphanumeric() && c != '\'')
            .filter(|w| !w.is_empty())
            .map(str::to_lowercase);
        for word in words {
            let h = fnv1a(format!("w:{word}").as_bytes());
            v[(h % self.dim as u64) as usize] += 1.0;
            let padded: Vec<char> = format!("<{word}>").chars().collect();
            for tri in padded.windows(3) {
                let s: String = tri.iter().collect();
                let h = fnv1a(format!("c:{s}").as_bytes());
                v[(h % self.dim as u64) as usize] += 0.5;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        v
    }
}

impl EmbeddingProvider for HashEmbedder {
    fn id(&self) -> &str {
        "test_hash"
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_batch(&self, docs: &[Document]) -> Result<Vec<Embedding>> {
        Ok(docs
            .iter()
            .map(|d| {
                let vector = self.vector(&d.text);
                Embedding {
                    degenerate: vector.iter().all(|x| *x == 0.0),
                    vector,
                    provider_id: self.id().to_string(),
                }
            })
            .collect())
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CacheLine {
    pub doc_id: String,
    pub vector: Vec<f64>,
}

/// Vectors precomputed offline, keyed by document id.
#[derive(Debug, Clone)]
pub struct FileCache {
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
}

impl FileCache {
    pub fn load(path: impl AsRef<Path>, dim: usize) -> Result<Self> {
        let path = path.as_ref();
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut vectors = HashMap::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: CacheLine = serde_json::from_str(&line).map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            if rec.vector.len() != dim || rec.vector.iter().any(|x| !x.is_finite()) {
                return Err(Error::Validation(format!(
                    "{}: line {}: vector for {} must have {dim} finite values",
                    path.display(),
                    i + 1,
                    rec.doc_id
                )));
            }
            vectors.insert(rec.doc_id, rec.vector);
        }
        Ok(FileCache { dim, vectors })
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

impl EmbeddingProvider for FileCache {
    fn id(&self) -> &str {
        "file_cache"
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_batch(&self, docs: &[Document]) -> Result<Vec<Embedding>> {
        docs.iter()
            .map(|d| {
                let v = self
                    .vectors
                    .get(&d.id)
                    .ok_or_else(|| Error::Lookup(d.id.clone()))?;
                Ok(Embedding {
                    degenerate: v.iter().all(|x| *x == 0.0),
                    vector: v.clone(),
                    provider_id: self.id().to_string(),
                })
            })
            .collect()
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: Vec<&'a str>,
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f64>>,
}

/// Client for a remote `/embed` endpoint.
#[derive(Debug)]
pub struct HttpEmbedder {
    client: JsonClient,
    dim: usize,
    batch_size: usize,
    truncation: usize,
}

impl HttpEmbedder {
    pub fn new(
        url: &str,
        token: Option<String>,
        dim: usize,
        batch_size: usize,
        max_in_flight: usize,
    ) -> Self {
        HttpEmbedder {
            client: JsonClient::new(url, token, max_in_flight),
            dim,
            batch_size: batch_size.max(1),
            truncation: DEFAULT_TRUNCATION,
        }
    }
}

impl EmbeddingProvider for HttpEmbedder {
    fn id(&self) -> &str {
        "http_client"
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_batch(&self, docs: &[Document]) -> Result<Vec<Embedding>> {
        let mut out = Vec::with_capacity(docs.len());
        for chunk in docs.chunks(self.batch_size) {
            let texts: Vec<String> = chunk
                .iter()
                .map(|d| truncate_tokens(&d.text, self.truncation))
                .collect();
            let req = EmbedRequest {
                texts: texts.iter().map(String::as_str).collect(),
            };
            let resp: EmbedResponse = self.client.post("/embed", &req)?;
            if resp.vectors.len() != chunk.len() {
                return Err(Error::Transport {
                    status: None,
                    message: format!(
                        "/embed returned {} vectors for {} texts",
                        resp.vectors.len(),
                        chunk.len()
                    ),
                });
            }
            for v in resp.vectors {
                if v.len() != self.dim || v.iter().any(|x| !x.is_finite()) {
                    return Err(Error::Transport {
                        status: None,
                        message: format!("/embed returned a vector of width {}, expected {}", v.len(), self.dim),
                    });
                }
                out.push(Embedding {
                    degenerate: v.iter().all(|x| *x == 0.0),
                    vector: v,
                    provider_id: self.id().to_string(),
                });
            }
        }
        Ok(out)
    }
}

/// Serializable provider selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EmbeddingConfig {
    TestHash {
        #[serde(default = "default_dim")]
        dim: usize,
        #[serde(default = "default_truncation")]
        truncation: usize,
    },
    FileCache {
        path: PathBuf,
        #[serde(default = "default_dim")]
        dim: usize,
    },
    HttpClient {
        url: String,
        #[serde(default)]
        token: Option<String>,
        #[serde(default = "default_dim")]
        dim: usize,
        #[serde(default = "default_batch")]
        batch_size: usize,
        #[serde(default = "default_in_flight")]
        max_in_flight: usize,
    },
}

fn default_dim() -> usize {
    DEFAULT_ENCODER_DIM
}
fn default_truncation() -> usize {
    DEFAULT_TRUNCATION
}
fn default_batch() -> usize {
    16
}
fn default_in_flight() -> usize {
    4
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        EmbeddingConfig::TestHash {
            dim: DEFAULT_ENCODER_DIM,
            truncation: DEFAULT_TRUNCATION,
        }
    }
}

impl EmbeddingConfig {
    pub fn dim(&self) -> usize {
        match self {
            EmbeddingConfig::TestHash { dim, .. }
            | EmbeddingConfig::FileCache { dim, .. }
            | EmbeddingConfig::HttpClient { dim, .. } => *dim,
        }
    }

    pub fn build(&self) -> Result<Box<dyn EmbeddingProvider>> {
        Ok(match self {
            EmbeddingConfig::TestHash { dim, truncation } => {
                Box::new(HashEmbedder::new(*dim, *truncation)?)
            }
            EmbeddingConfig::FileCache { path, dim } => Box::new(FileCache::load(path, *dim)?),
            EmbeddingConfig::HttpClient {
                url,
                token,
                dim,
                batch_size,
                max_in_flight,
            } => Box::new(HttpEmbedder::new(
                url,
                token.clone(),
                *dim,
                *batch_size,
                *max_in_flight,
            )),
        })
    }
}

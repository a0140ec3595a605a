//! Embedding vectors and the providers that produce them.
//!
//! The local provider is a seeded feature-hashing embedder over lowercased
//! word unigrams and bigrams, L2-normalized. It needs no network and gives
//! identical vectors on every run, which is what the tests and the offline
//! CLI rely on. The HTTP provider targets an OpenAI-style embeddings
//! endpoint.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::provider::{HttpEndpoint, ProviderError, ENV_EMBED_ENDPOINT, ENV_EMBED_KEY};
use crate::tokenize::{DefaultTokenizer, Tokenizer};

pub const DEFAULT_DIMENSION: usize = 256;
pub const DEFAULT_SEED: u64 = 0x5eed;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmbedError {
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("embedding dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("invalid embedding: {0}")]
    InvalidVector(String),
    #[error("unknown embedding provider tag {0:?}")]
    UnknownProvider(String),
}

/// Non-empty vector of finite reals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct EmbeddingVector(Vec<f64>);

impl TryFrom<Vec<f64>> for EmbeddingVector {
    type Error = EmbedError;

    fn try_from(values: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(values)
    }
}

impl From<EmbeddingVector> for Vec<f64> {
    fn from(v: EmbeddingVector) -> Self {
        v.0
    }
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self, EmbedError> {
        if values.is_empty() {
            return Err(EmbedError::InvalidVector("dimension must be >= 1".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(EmbedError::InvalidVector(format!("entry {i} is not finite")));
        }
        Ok(Self(values))
    }

    pub fn dimension(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&v| v == 0.0)
    }

    pub fn scaled(&self, factor: f64) -> Result<Self, EmbedError> {
        Self::new(self.0.iter().map(|v| v * factor).collect())
    }
}

pub(crate) fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

/// `dot(u, v) / (|u| |v|)`, clamped to [-1, 1]. A zero vector on either
/// side scores 0. Negative zero is returned as 0 so ties compare equal
/// under `total_cmp`.
pub fn cosine(u: &EmbeddingVector, v: &EmbeddingVector) -> Result<f64, EmbedError> {
    if u.dimension() != v.dimension() {
        return Err(EmbedError::DimensionMismatch {
            expected: u.dimension(),
            actual: v.dimension(),
        });
    }
    Ok(cosine_with_norms(u.values(), u.norm(), v.values(), v.norm()))
}

pub(crate) fn cosine_with_norms(u: &[f64], u_norm: f64, v: &[f64], v_norm: f64) -> f64 {
    if u_norm == 0.0 || v_norm == 0.0 {
        return 0.0;
    }
    (dot(u, v) / (u_norm * v_norm)).clamp(-1.0, 1.0) + 0.0
}

pub trait Embedder: Send + Sync {
    /// Identifies the provider and its configuration; persisted with an
    /// index so queries are embedded the same way.
    fn tag(&self) -> String;

    fn dimension(&self) -> usize;

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError>;
}

pub fn embed(text: &str, provider: &dyn Embedder) -> Result<EmbeddingVector, EmbedError> {
    let vector = provider.embed(text)?;
    if vector.dimension() != provider.dimension() {
        return Err(EmbedError::DimensionMismatch {
            expected: provider.dimension(),
            actual: vector.dimension(),
        });
    }
    Ok(vector)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LocalHashEmbedder {
    dimension: usize,
    seed: u64,
}

impl Default for LocalHashEmbedder {
    fn default() -> Self {
        Self {
            dimension: DEFAULT_DIMENSION,
            seed: DEFAULT_SEED,
        }
    }
}

const TAG_PREFIX: &str = "local-hash-v1";

impl LocalHashEmbedder {
    pub fn new(dimension: usize, seed: u64) -> Result<Self, EmbedError> {
        if dimension == 0 {
            return Err(EmbedError::InvalidVector("dimension must be >= 1".into()));
        }
        Ok(Self { dimension, seed })
    }

    fn hash(&self, feature: &str) -> u64 {
        // FNV-1a, seeded, followed by a splitmix64 finalizer.
        let mut h = 0xcbf2_9ce4_8422_2325u64 ^ self.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
        for b in feature.as_bytes() {
            h ^= u64::from(*b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        h ^= h >> 30;
        h = h.wrapping_mul(0xbf58_476d_1ce4_e5b9);
        h ^= h >> 27;
        h = h.wrapping_mul(0x94d0_49bb_1331_11eb);
        h ^ (h >> 31)
    }
}

impl Embedder for LocalHashEmbedder {
    fn tag(&self) -> String {
        format!("{TAG_PREFIX}:dim={}:seed={}", self.dimension, self.seed)
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        let words: Vec<String> = DefaultTokenizer
            .token_spans(text)
            .into_iter()
            .map(|r| &text[r])
            .filter(|t| t.chars().any(char::is_alphanumeric))
            .map(str::to_lowercase)
            .collect();
        let mut values = vec![0.0f64; self.dimension];
        let mut add = |feature: &str| {
            let h = self.hash(feature);
            let bucket = (h % self.dimension as u64) as usize;
            values[bucket] += if h >> 63 == 0 { 1.0 } else { -1.0 };
        };
        for w in &words {
            add(w);
        }
        for pair in words.windows(2) {
            add(&format!("{} {}", pair[0], pair[1]));
        }
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            for v in &mut values {
                *v /= norm;
            }
        }
        EmbeddingVector::new(values)
    }
}

/// OpenAI-style `{"input", "model"}` → `{"data": [{"embedding": [...]}]}`.
#[derive(Debug, Clone)]
pub struct HttpEmbedder {
    endpoint: HttpEndpoint,
    model: String,
    dimension: usize,
}

impl HttpEmbedder {
    pub fn new(endpoint: HttpEndpoint, model: impl Into<String>, dimension: usize) -> Self {
        Self {
            endpoint,
            model: model.into(),
            dimension,
        }
    }

    pub fn from_env(model: impl Into<String>, dimension: usize) -> Result<Self, EmbedError> {
        let endpoint = HttpEndpoint::from_env(ENV_EMBED_ENDPOINT, ENV_EMBED_KEY)?;
        Ok(Self::new(endpoint, model, dimension))
    }
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    embedding: Vec<f64>,
}

impl Embedder for HttpEmbedder {
    fn tag(&self) -> String {
        format!("http:{}:dim={}", self.model, self.dimension)
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        let body = serde_json::json!({ "input": text, "model": self.model });
        let (_, reply) = self.endpoint.post_json(&body)?;
        let parsed: EmbeddingResponse = serde_json::from_str(&reply)
            .map_err(|e| ProviderError::InvalidResponse(format!("embedding response: {e}")))?;
        let values = parsed
            .data
            .into_iter()
            .next()
            .ok_or_else(|| ProviderError::InvalidResponse("embedding response has no data".into()))?
            .embedding;
        if values.len() != self.dimension {
            return Err(EmbedError::DimensionMismatch {
                expected: self.dimension,
                actual: values.len(),
            });
        }
        EmbeddingVector::new(values)
    }
}

fn tag_param<'a>(parts: &[&'a str], name: &str) -> Option<&'a str> {
    parts.iter().find_map(|p| p.strip_prefix(name)?.strip_prefix('='))
}

/// Rebuilds the embedder recorded in an index header. HTTP embedders read
/// their endpoint from the environment.
pub fn embedder_from_tag(tag: &str) -> Result<Box<dyn Embedder>, EmbedError> {
    let unknown = || EmbedError::UnknownProvider(tag.to_string());
    let parts: Vec<&str> = tag.split(':').collect();
    match parts.first().copied() {
        Some(TAG_PREFIX) => {
            let dimension = tag_param(&parts, "dim").and_then(|d| d.parse().ok()).ok_or_else(unknown)?;
            let seed = tag_param(&parts, "seed").and_then(|s| s.parse().ok()).ok_or_else(unknown)?;
            Ok(Box::new(LocalHashEmbedder::new(dimension, seed)?))
        }
        Some("http") if parts.len() >= 3 => {
            let dimension = tag_param(&parts, "dim").and_then(|d| d.parse().ok()).ok_or_else(unknown)?;
            let model = parts[1..parts.len() - 1].join(":");
            Ok(Box::new(HttpEmbedder::from_env(model, dimension)?))
        }
        _ => Err(unknown()),
    }
}

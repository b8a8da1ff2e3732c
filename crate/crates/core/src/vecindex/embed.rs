//! Text embedding providers.

use crate::util::fnv1a64;
use serde::Deserialize;
use std::time::Duration;

#[derive(Debug, thiserror::Error)]
pub enum EmbedError {
    #[error("cannot embed empty text")]
    EmptyText,
    /// Transport failure; the call may succeed if retried.
    #[error("embedding provider `{provider}` unreachable: {message}")]
    Unreachable { provider: String, message: String },
    #[error("embedding provider `{provider}` rejected the request ({status}): {message}")]
    Rejected {
        provider: String,
        status: u16,
        message: String,
    },
    #[error("embedding provider `{provider}` returned an unusable response: {message}")]
    BadResponse { provider: String, message: String },
}

impl EmbedError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, EmbedError::Unreachable { .. })
    }
}

pub trait Embedder: Send + Sync {
    fn provider_id(&self) -> &str;

    fn embed(&self, text: &str) -> Result<Vec<f64>, EmbedError>;
}

/// Network-free embedder: character n-grams hashed into a fixed number of
/// buckets, L2-normalized. Text is lower-cased, whitespace-collapsed and
/// padded with one space on each side so word boundaries form n-grams.
#[derive(Debug, Clone)]
pub struct HashingEmbedder {
    dimension: usize,
    ngram_sizes: Vec<usize>,
}

impl Default for HashingEmbedder {
    fn default() -> Self {
        Self::new(256, vec![2, 3])
    }
}

impl HashingEmbedder {
    pub fn new(dimension: usize, ngram_sizes: Vec<usize>) -> Self {
        assert!(dimension > 0, "dimension must be positive");
        assert!(ngram_sizes.iter().all(|&n| n > 0), "n-gram sizes must be positive");
        Self { dimension, ngram_sizes }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }
}

impl Embedder for HashingEmbedder {
    fn provider_id(&self) -> &str {
        "hashing"
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, EmbedError> {
        let normalized: String = text.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
        if normalized.is_empty() {
            return Err(EmbedError::EmptyText);
        }
        let chars: Vec<char> = format!(" {normalized} ").chars().collect();
        let mut v = vec![0.0; self.dimension];
        let mut buf = String::new();
        for &n in &self.ngram_sizes {
            if chars.len() < n {
                continue;
            }
            for window in chars.windows(n) {
                buf.clear();
                buf.extend(window);
                let bucket = (fnv1a64(buf.as_bytes()) % self.dimension as u64) as usize;
                v[bucket] += 1.0;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        Ok(v)
    }
}

/// Client for an OpenAI-compatible `POST {base_url}/embeddings` endpoint.
pub struct RemoteEmbedder {
    id: String,
    base_url: String,
    model: String,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    embedding: Vec<f64>,
}

impl RemoteEmbedder {
    pub fn new(base_url: &str, model: &str, api_key: Option<String>, timeout: Duration) -> Self {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .expect("http client");
        Self {
            id: format!("remote:{model}"),
            base_url: base_url.trim_end_matches('/').to_string(),
            model: model.to_string(),
            api_key,
            client,
        }
    }
}

impl Embedder for RemoteEmbedder {
    fn provider_id(&self) -> &str {
        &self.id
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, EmbedError> {
        if text.trim().is_empty() {
            return Err(EmbedError::EmptyText);
        }
        let mut req = self
            .client
            .post(format!("{}/embeddings", self.base_url))
            .json(&serde_json::json!({ "model": self.model, "input": text }));
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| EmbedError::Unreachable {
            provider: self.id.clone(),
            message: e.to_string(),
        })?;
        let status = resp.status();
        if status.is_server_error() {
            return Err(EmbedError::Unreachable {
                provider: self.id.clone(),
                message: format!("server error {status}"),
            });
        }
        if !status.is_success() {
            return Err(EmbedError::Rejected {
                provider: self.id.clone(),
                status: status.as_u16(),
                message: resp.text().unwrap_or_default(),
            });
        }
        let body: EmbeddingResponse = resp.json().map_err(|e| EmbedError::BadResponse {
            provider: self.id.clone(),
            message: e.to_string(),
        })?;
        body.data
            .into_iter()
            .next()
            .map(|d| d.embedding)
            .ok_or_else(|| EmbedError::BadResponse {
                provider: self.id.clone(),
                message: "no embedding in response".into(),
            })
    }
}

/// Cosine similarity, clamped to [-1, 1]. Zero vectors score 0.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0)
}

//! Embedding providers: a deterministic feature-hash embedder and a client
//! for an external `POST /embed` service.

use std::sync::{Condvar, Mutex, OnceLock};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{tokenize, TokenMode};

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub const MIN_HASH_DIM: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmbedError {
    #[error("cannot embed empty text")]
    EmptyText,
    #[error("hash embedding dimension must be >= {MIN_HASH_DIM}, got {0}")]
    InvalidDim(usize),
    #[error("embedding service unreachable: {0}")]
    ServiceUnreachable(String),
    #[error("embedding service returned {status}: {body}")]
    ServiceError { status: u16, body: String },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid service response: {0}")]
    InvalidResponse(String),
}

/// Text → unit vector of a fixed dimension. Implementations must be
/// deterministic and safe to call from many threads.
pub trait EmbeddingProvider: Send + Sync {
    /// The output dimension, when known ahead of the first call.
    fn dim(&self) -> Option<usize>;

    fn embed(&self, text: &str) -> Result<Vec<f32>, EmbedError>;

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f32>>, EmbedError> {
        texts.iter().map(|t| self.embed(t)).collect()
    }
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

/// Signed feature hashing over word tokens, L2-normalised.
///
/// Each token adds ±1 to bucket `h mod dim`, negative when bit 63 of the
/// FNV-1a hash is set. An all-zero accumulator maps to `e_0`.
pub fn hash_embed(text: &str, dim: usize) -> Result<Vec<f32>, EmbedError> {
    if dim < MIN_HASH_DIM {
        return Err(EmbedError::InvalidDim(dim));
    }
    if text.trim().is_empty() {
        return Err(EmbedError::EmptyText);
    }
    let mut acc = vec![0.0f64; dim];
    for token in tokenize(text, TokenMode::Word) {
        let h = fnv1a64(token.as_bytes());
        let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
        acc[(h % dim as u64) as usize] += sign;
    }
    let norm = acc.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        let mut unit = vec![0.0f32; dim];
        unit[0] = 1.0;
        return Ok(unit);
    }
    Ok(acc.iter().map(|x| (x / norm) as f32).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashEmbedder {
    dim: usize,
}

impl HashEmbedder {
    pub fn new(dim: usize) -> Result<Self, EmbedError> {
        if dim < MIN_HASH_DIM {
            return Err(EmbedError::InvalidDim(dim));
        }
        Ok(Self { dim })
    }
}

impl EmbeddingProvider for HashEmbedder {
    fn dim(&self) -> Option<usize> {
        Some(self.dim)
    }

    fn embed(&self, text: &str) -> Result<Vec<f32>, EmbedError> {
        hash_embed(text, self.dim)
    }
}

#[derive(Debug, Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [&'a str],
}

#[derive(Debug, Deserialize)]
struct EmbedResponse {
    embeddings: Vec<Vec<f64>>,
    dim: usize,
}

/// Decode and validate a service response body, normalising every vector.
pub fn parse_embed_response(
    body: &[u8],
    expected_count: usize,
) -> Result<Vec<Vec<f32>>, EmbedError> {
    let resp: EmbedResponse =
        serde_json::from_slice(body).map_err(|e| EmbedError::InvalidResponse(e.to_string()))?;
    if resp.embeddings.len() != expected_count {
        return Err(EmbedError::InvalidResponse(format!(
            "expected {expected_count} embeddings, got {}",
            resp.embeddings.len()
        )));
    }
    resp.embeddings
        .into_iter()
        .map(|v| {
            if v.len() != resp.dim {
                return Err(EmbedError::DimensionMismatch {
                    expected: resp.dim,
                    got: v.len(),
                });
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if !norm.is_finite() || norm == 0.0 {
                return Err(EmbedError::InvalidResponse(
                    "zero or non-finite vector".into(),
                ));
            }
            Ok(v.iter().map(|x| (x / norm) as f32).collect())
        })
        .collect()
}

/// Counting semaphore bounding in-flight requests.
#[derive(Debug)]
struct Permits {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Permits {
    fn acquire(&self) -> PermitGuard<'_> {
        let mut free = self.free.lock().unwrap();
        while *free == 0 {
            free = self.cv.wait(free).unwrap();
        }
        *free -= 1;
        PermitGuard(self)
    }
}

struct PermitGuard<'a>(&'a Permits);

impl Drop for PermitGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap() += 1;
        self.0.cv.notify_one();
    }
}

/// Blocking client for an embedding service speaking
/// `POST /embed {"texts": [...]} -> {"embeddings": [[...]], "dim": n}`.
#[derive(Debug)]
pub struct RemoteEmbedder {
    url: String,
    agent: ureq::Agent,
    permits: Permits,
    dim: OnceLock<usize>,
}

impl RemoteEmbedder {
    /// `endpoint` is the service base address, e.g. `http://127.0.0.1:8080`.
    pub fn new(endpoint: &str, max_in_flight: usize, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            url: format!("{}/embed", endpoint.trim_end_matches('/')),
            agent,
            permits: Permits {
                free: Mutex::new(max_in_flight.max(1)),
                cv: Condvar::new(),
            },
            dim: OnceLock::new(),
        }
    }

    pub fn remote_embed(&self, texts: &[&str]) -> Result<Vec<Vec<f32>>, EmbedError> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        if texts.iter().any(|t| t.trim().is_empty()) {
            return Err(EmbedError::EmptyText);
        }
        let _permit = self.permits.acquire();
        let mut resp = self
            .agent
            .post(&self.url)
            .send_json(EmbedRequest { texts })
            .map_err(|e| EmbedError::ServiceUnreachable(e.to_string()))?;
        let status = resp.status().as_u16();
        let body = resp
            .body_mut()
            .read_to_vec()
            .map_err(|e| EmbedError::ServiceUnreachable(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(EmbedError::ServiceError {
                status,
                body: String::from_utf8_lossy(&body).into_owned(),
            });
        }
        let vectors = parse_embed_response(&body, texts.len())?;
        if let Some(first) = vectors.first() {
            let expected = *self.dim.get_or_init(|| first.len());
            if first.len() != expected {
                return Err(EmbedError::DimensionMismatch {
                    expected,
                    got: first.len(),
                });
            }
        }
        Ok(vectors)
    }
}

impl EmbeddingProvider for RemoteEmbedder {
    fn dim(&self) -> Option<usize> {
        self.dim.get().copied()
    }

    fn embed(&self, text: &str) -> Result<Vec<f32>, EmbedError> {
        Ok(self.remote_embed(&[text])?.remove(0))
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f32>>, EmbedError> {
        self.remote_embed(texts)
    }
}

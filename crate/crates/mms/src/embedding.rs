//! Text embeddings and cosine similarity.
//!
//! Vectors are stored as `f32`; similarity is always computed in `f64`.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::chat::{http_agent, post_json, RetryPolicy};
use crate::error::{MmsError, Result};
use crate::text::tokenize;

pub const DEFAULT_HASH_DIM: usize = 256;
pub const EMBED_URL_ENV: &str = "MMS_EMBED_URL";
pub const EMBED_KEY_ENV: &str = "MMS_EMBED_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    values: Vec<f32>,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f32>) -> Result<Self> {
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(MmsError::InvalidArgument(format!(
                "embedding holds a non-finite value ({bad})"
            )));
        }
        Ok(Self { values })
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            values: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| *v == 0.0)
    }

    pub fn ensure_dim(&self, expected: usize) -> Result<()> {
        if self.dim() != expected {
            return Err(MmsError::Dimension {
                expected,
                actual: self.dim(),
            });
        }
        Ok(())
    }
}

/// A cosine score. `zero_norm` flags that one side was the zero vector, in
/// which case the score is defined as 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Similarity {
    pub value: f64,
    pub zero_norm: bool,
}

/// Cosine similarity over any real-valued slices, accumulated in `f64` and
/// clamped to `[-1, 1]`. Callers guarantee equal lengths.
pub fn cosine<T: Copy + Into<f64>>(q: &[T], v: &[T]) -> Similarity {
    debug_assert_eq!(q.len(), v.len());
    let (mut dot, mut qq, mut vv) = (0.0f64, 0.0f64, 0.0f64);
    for (a, b) in q.iter().zip(v) {
        let (a, b): (f64, f64) = ((*a).into(), (*b).into());
        dot += a * b;
        qq += a * a;
        vv += b * b;
    }
    if qq == 0.0 || vv == 0.0 {
        return Similarity {
            value: 0.0,
            zero_norm: true,
        };
    }
    // `+ 0.0` folds a negative zero into positive zero so ranking ties stay ties
    Similarity {
        value: (dot / (qq.sqrt() * vv.sqrt())).clamp(-1.0, 1.0) + 0.0,
        zero_norm: false,
    }
}

pub fn cosine_sim(q: &EmbeddingVector, v: &EmbeddingVector) -> Result<Similarity> {
    v.ensure_dim(q.dim())?;
    Ok(cosine(&q.values, &v.values))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EmbedderKind {
    ApiModel,
    HashFeature,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbedderBackend {
    pub kind: EmbedderKind,
    pub dim: usize,
    /// Provider model name; unused by `HashFeature`.
    #[serde(default)]
    pub model: String,
}

impl EmbedderBackend {
    pub fn hash(dim: usize) -> Self {
        Self {
            kind: EmbedderKind::HashFeature,
            dim,
            model: String::new(),
        }
    }

    pub fn api(model: impl Into<String>, dim: usize) -> Self {
        Self {
            kind: EmbedderKind::ApiModel,
            dim,
            model: model.into(),
        }
    }

    /// Instantiate the backend. `ApiModel` reads `MMS_EMBED_URL` / `MMS_EMBED_KEY`.
    pub fn build(&self) -> Result<Box<dyn Embedder>> {
        match self.kind {
            EmbedderKind::HashFeature => Ok(Box::new(HashEmbedder::new(self.dim)?)),
            EmbedderKind::ApiModel => {
                let url = std::env::var(EMBED_URL_ENV)
                    .map_err(|_| MmsError::Config(format!("{EMBED_URL_ENV} is not set")))?;
                Ok(Box::new(ApiEmbedder::new(
                    url,
                    std::env::var(EMBED_KEY_ENV).ok(),
                    &self.model,
                    self.dim,
                )))
            }
        }
    }
}

impl Default for EmbedderBackend {
    fn default() -> Self {
        Self::hash(DEFAULT_HASH_DIM)
    }
}

pub trait Embedder: Send + Sync {
    fn embed(&self, text: &str) -> Result<EmbeddingVector>;

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>> {
        texts.iter().map(|t| self.embed(t)).collect()
    }

    fn dim(&self) -> usize;

    fn describe(&self) -> String;
}

impl<E: Embedder + ?Sized> Embedder for Box<E> {
    fn embed(&self, text: &str) -> Result<EmbeddingVector> {
        (**self).embed(text)
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>> {
        (**self).embed_batch(texts)
    }

    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn describe(&self) -> String {
        (**self).describe()
    }
}

/// Signed feature hashing of lowercase unigrams and adjacent bigrams,
/// L2-normalized. Empty text maps to the zero vector.
#[derive(Debug, Clone, Copy)]
pub struct HashEmbedder {
    dim: usize,
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(parts: &[&[u8]]) -> u64 {
    let mut hash = FNV_OFFSET;
    for part in parts {
        for byte in *part {
            hash ^= u64::from(*byte);
            hash = hash.wrapping_mul(FNV_PRIME);
        }
    }
    hash
}

impl HashEmbedder {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(MmsError::InvalidArgument(
                "embedding dimension must be positive".into(),
            ));
        }
        Ok(Self { dim })
    }

    fn add(&self, acc: &mut [f64], feature: &[&[u8]]) {
        let h = fnv1a(feature);
        let bucket = (h % self.dim as u64) as usize;
        acc[bucket] += if h >> 63 == 0 { 1.0 } else { -1.0 };
    }
}

impl Embedder for HashEmbedder {
    fn embed(&self, text: &str) -> Result<EmbeddingVector> {
        let tokens = tokenize(text);
        let mut acc = vec![0.0f64; self.dim];
        for token in &tokens {
            self.add(&mut acc, &[b"u:", token.as_bytes()]);
        }
        for pair in tokens.windows(2) {
            self.add(
                &mut acc,
                &[b"b:", pair[0].as_bytes(), b" ", pair[1].as_bytes()],
            );
        }
        let norm = acc.iter().map(|v| v * v).sum::<f64>().sqrt();
        let values = if norm == 0.0 {
            vec![0.0; self.dim]
        } else {
            acc.iter().map(|v| (v / norm) as f32).collect()
        };
        Ok(EmbeddingVector { values })
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn describe(&self) -> String {
        format!("hash-feature/{}", self.dim)
    }
}

#[derive(Debug, Serialize)]
struct EmbedRequest<'a> {
    model: &'a str,
    input: &'a [&'a str],
}

#[derive(Debug, Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f64>>,
}

/// Client for the embedding wire contract: `{model, input[]}` in,
/// `{vectors[][]}` out. Provider vectors are passed through unnormalized.
pub struct ApiEmbedder {
    url: String,
    key: Option<String>,
    model: String,
    dim: usize,
    agent: ureq::Agent,
    retry: RetryPolicy,
}

impl ApiEmbedder {
    pub fn new(url: impl Into<String>, key: Option<String>, model: &str, dim: usize) -> Self {
        Self {
            url: url.into(),
            key,
            model: model.to_string(),
            dim,
            agent: http_agent(),
            retry: RetryPolicy::default(),
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_backoff(mut self, backoff: Duration) -> Self {
        self.retry.initial_backoff = backoff;
        self
    }
}

impl Embedder for ApiEmbedder {
    fn embed(&self, text: &str) -> Result<EmbeddingVector> {
        let mut out = self.embed_batch(&[text])?;
        Ok(out.remove(0))
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>> {
        let body = EmbedRequest {
            model: &self.model,
            input: texts,
        };
        let resp: EmbedResponse = self
            .retry
            .run(|| post_json(&self.agent, &self.url, self.key.as_deref(), &body))
            .map_err(|(attempts, err)| MmsError::Embedding {
                attempts,
                message: err.to_string(),
            })?;
        if resp.vectors.len() != texts.len() {
            return Err(MmsError::Embedding {
                attempts: 1,
                message: format!(
                    "asked for {} vectors, got {}",
                    texts.len(),
                    resp.vectors.len()
                ),
            });
        }
        resp.vectors
            .into_iter()
            .map(|v| {
                let vector = EmbeddingVector::new(v.into_iter().map(|x| x as f32).collect())?;
                vector.ensure_dim(self.dim)?;
                Ok(vector)
            })
            .collect()
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn describe(&self) -> String {
        format!("api:{}/{}", self.model, self.dim)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(values: &[f32]) -> EmbeddingVector {
        EmbeddingVector::new(values.to_vec()).unwrap()
    }

    #[test]
    fn cosine_examples() {
        assert_eq!(
            cosine_sim(&v(&[1.0, 0.0]), &v(&[1.0, 0.0])).unwrap().value,
            1.0
        );
        assert_eq!(
            cosine_sim(&v(&[1.0, 0.0]), &v(&[0.0, 1.0])).unwrap().value,
            0.0
        );
        // 32 / (sqrt(14) * sqrt(77)), evaluated with 30-digit arithmetic
        let expected = 0.974_631_846_197_076_3;
        let got = cosine_sim(&v(&[1.0, 2.0, 3.0]), &v(&[4.0, 5.0, 6.0]))
            .unwrap()
            .value;
        assert!((got - expected).abs() < 1e-15, "{got}");
    }

    #[test]
    fn zero_vectors_score_zero() {
        let s = cosine_sim(&EmbeddingVector::zeros(2), &v(&[1.0, 0.0])).unwrap();
        assert_eq!(
            s,
            Similarity {
                value: 0.0,
                zero_norm: true
            }
        );
        let s = cosine_sim(&EmbeddingVector::zeros(2), &EmbeddingVector::zeros(2)).unwrap();
        assert!(s.zero_norm);
    }

    #[test]
    fn dimension_mismatch() {
        assert!(matches!(
            cosine_sim(&v(&[1.0]), &v(&[1.0, 0.0])),
            Err(MmsError::Dimension {
                expected: 1,
                actual: 2
            })
        ));
    }

    #[test]
    fn non_finite_rejected() {
        assert!(EmbeddingVector::new(vec![f32::NAN]).is_err());
        assert!(EmbeddingVector::new(vec![f32::INFINITY]).is_err());
    }

    #[test]
    fn hash_embedder_basics() {
        let e = HashEmbedder::new(DEFAULT_HASH_DIM).unwrap();
        let empty = e.embed("").unwrap();
        assert_eq!(empty.dim(), 256);
        assert!(empty.is_zero());
        assert!(e.embed("!!! ...").unwrap().is_zero());

        let a = e.embed("The dog park").unwrap();
        assert_eq!(a, e.embed("The dog park").unwrap());
        let norm: f64 = a
            .values()
            .iter()
            .map(|x| f64::from(*x).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!((norm - 1.0).abs() < 1e-6);
        assert!(HashEmbedder::new(0).is_err());
    }

    #[test]
    fn hash_embedder_is_case_insensitive_and_order_sensitive() {
        let e = HashEmbedder::new(512).unwrap();
        assert_eq!(e.embed("Dog Park").unwrap(), e.embed("dog park").unwrap());
        assert_ne!(e.embed("dog park").unwrap(), e.embed("park dog").unwrap());
    }

    #[test]
    fn related_text_scores_higher() {
        let e = HashEmbedder::new(DEFAULT_HASH_DIM).unwrap();
        let q = e.embed("dog park").unwrap();
        let near = cosine_sim(&q, &e.embed("dog park visit").unwrap())
            .unwrap()
            .value;
        let far = cosine_sim(&q, &e.embed("tax filing").unwrap())
            .unwrap()
            .value;
        assert!(near > far, "{near} vs {far}");
    }

    #[test]
    fn backend_build() {
        let hash = EmbedderBackend::default().build().unwrap();
        assert_eq!(hash.dim(), 256);
        assert_eq!(hash.describe(), "hash-feature/256");
    }
}

//! Text embedding providers.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// A point in embedding space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("embedding entries must be finite"));
        }
        Ok(EmbeddingVector { values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn euclidean_distance(&self, other: &EmbeddingVector) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub fn cosine_similarity(&self, other: &EmbeddingVector) -> f64 {
        let dot: f64 = self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum();
        let denom = self.norm() * other.norm();
        if denom == 0.0 {
            0.0
        } else {
            dot / denom
        }
    }

    /// Raw little-endian bytes of the entries; used by the oracle hash.
    pub(crate) fn le_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.values.len() * 8);
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }
}

/// Maps text to a fixed-dimension vector.
pub trait Embedder: Send + Sync {
    fn dimension(&self) -> usize;
    fn embed(&self, text: &str) -> Result<EmbeddingVector>;
}

/// Embed a non-empty text.
pub fn embed_text(embedder: &dyn Embedder, text: &str) -> Result<EmbeddingVector> {
    if text.trim().is_empty() {
        return Err(Error::invalid("cannot embed empty text"));
    }
    embedder.embed(text)
}

/// Deterministic bag-of-words embedder: words are hashed into `dim` buckets,
/// weighted by `1 + ln(count)`, and the vector is L2-normalized. Word order
/// does not matter, so reorderings embed identically and word-level edits
/// move the vector only a little.
pub struct HashedBagEmbedder {
    dim: usize,
}

pub const DEFAULT_EMBEDDING_DIM: usize = 256;

impl Default for HashedBagEmbedder {
    fn default() -> Self {
        HashedBagEmbedder {
            dim: DEFAULT_EMBEDDING_DIM,
        }
    }
}

impl HashedBagEmbedder {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("embedding dimension must be at least 1"));
        }
        Ok(HashedBagEmbedder { dim })
    }

    fn bucket(&self, word: &str) -> usize {
        let digest = Sha256::digest(word.as_bytes());
        let v = u64::from_be_bytes(digest[..8].try_into().unwrap());
        (v % self.dim as u64) as usize
    }

    fn words(text: &str) -> impl Iterator<Item = String> + '_ {
        text.split_whitespace().filter_map(|raw| {
            let trimmed: String = raw
                .trim_matches(|ch: char| !ch.is_alphanumeric())
                .to_lowercase();
            (!trimmed.is_empty()).then_some(trimmed)
        })
    }
}

impl Embedder for HashedBagEmbedder {
    fn dimension(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector> {
        let mut counts: std::collections::HashMap<String, u64> = std::collections::HashMap::new();
        for word in Self::words(text) {
            *counts.entry(word).or_insert(0) += 1;
        }
        if counts.is_empty() {
            return Err(Error::invalid("text contains no words to embed"));
        }
        let mut values = vec![0.0f64; self.dim];
        for (word, count) in counts {
            values[self.bucket(&word)] += 1.0 + (count as f64).ln();
        }
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        for v in &mut values {
            *v /= norm;
        }
        Ok(EmbeddingVector { values })
    }
}

/// Adapter for an OpenAI-compatible embeddings endpoint.
pub struct RemoteEmbedder {
    endpoint: String,
    model: String,
    auth_env: String,
    dim: usize,
}

impl RemoteEmbedder {
    pub fn new(endpoint: String, model: String, auth_env: String, dim: usize) -> Self {
        RemoteEmbedder {
            endpoint,
            model,
            auth_env,
            dim,
        }
    }
}

impl Embedder for RemoteEmbedder {
    fn dimension(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector> {
        let token = std::env::var(&self.auth_env).map_err(|_| {
            Error::Remote(format!(
                "auth token environment variable {} is not set",
                self.auth_env
            ))
        })?;
        let url = format!("{}/embeddings", self.endpoint.trim_end_matches('/'));
        let body = serde_json::json!({ "model": self.model, "input": text });
        let mut delay = std::time::Duration::from_millis(250);
        let mut last_err = String::new();
        for attempt in 0..3 {
            if attempt > 0 {
                std::thread::sleep(delay);
                delay *= 2;
            }
            match ureq::post(&url)
                .header("Authorization", &format!("Bearer {token}"))
                .send_json(body.clone())
            {
                Ok(mut response) => {
                    let json: serde_json::Value = response
                        .body_mut()
                        .read_json()
                        .map_err(|e| Error::Remote(format!("bad response body: {e}")))?;
                    let values: Option<Vec<f64>> = json["data"][0]["embedding"]
                        .as_array()
                        .map(|arr| arr.iter().filter_map(|v| v.as_f64()).collect());
                    return match values {
                        Some(v) if !v.is_empty() => EmbeddingVector::new(v),
                        _ => Err(Error::Remote("response carries no embedding".into())),
                    };
                }
                Err(ureq::Error::StatusCode(code)) => {
                    last_err = format!("http status {code}");
                    if !(code == 429 || code >= 500) {
                        return Err(Error::Remote(last_err));
                    }
                }
                Err(e) => last_err = format!("transport error: {e}"),
            }
        }
        Err(Error::Remote(format!(
            "giving up after 3 attempts: {last_err}"
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn embed_is_deterministic_and_normalized() {
        let e = HashedBagEmbedder::default();
        let a = embed_text(&e, "the quick brown fox").unwrap();
        let b = embed_text(&e, "the quick brown fox").unwrap();
        assert_eq!(a, b);
        assert!((a.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_text_rejected() {
        let e = HashedBagEmbedder::default();
        assert!(embed_text(&e, "").is_err());
        assert!(embed_text(&e, "   ").is_err());
        assert!(embed_text(&e, "...").is_err());
    }

    #[test]
    fn word_overlap_orders_similarity() {
        // Texts sharing 90% of their words are closer than texts sharing 10%.
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let e = HashedBagEmbedder::default();
        let mut wins = 0;
        let pairs = 100;
        for _ in 0..pairs {
            let base: Vec<String> = (0..20)
                .map(|_| format!("word{}", rng.random_range(0..5000)))
                .collect();
            let mut near = base.clone();
            for slot in near.iter_mut().take(2) {
                *slot = format!("word{}", rng.random_range(5000..10000));
            }
            let mut far = base.clone();
            for slot in far.iter_mut().take(18) {
                *slot = format!("word{}", rng.random_range(5000..10000));
            }
            let vb = e.embed(&base.join(" ")).unwrap();
            let vn = e.embed(&near.join(" ")).unwrap();
            let vf = e.embed(&far.join(" ")).unwrap();
            if vb.cosine_similarity(&vn) > vb.cosine_similarity(&vf) {
                wins += 1;
            }
        }
        assert!(wins >= 95, "similarity ordering held in {wins}/{pairs} pairs");
    }

    #[test]
    fn order_invariance() {
        let e = HashedBagEmbedder::default();
        let a = e.embed("alpha beta gamma delta").unwrap();
        let b = e.embed("delta gamma beta alpha").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn punctuation_and_case_folded() {
        let e = HashedBagEmbedder::default();
        let a = e.embed("Hello, world!").unwrap();
        let b = e.embed("hello world").unwrap();
        assert_eq!(a, b);
    }
}

//! Next-token-distribution providers.
//!
//! Three implementations sit behind the [`LanguageModel`] trait: a
//! deterministic synthetic channel (seeded Dirichlet draws with a tunable
//! entropy level), a corpus-trained n-gram model with additive smoothing,
//! and an adapter for OpenAI-compatible completion endpoints. The synthetic
//! and n-gram models are fully reproducible and carry the whole test suite;
//! the remote adapter exists for running against real models.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::Vocabulary;
use crate::error::{Error, Result};
use crate::stats::digamma;

/// A probability vector over the vocabulary.
#[derive(Clone, Debug, PartialEq)]
pub struct TokenDistribution {
    probs: Vec<f64>,
}

impl TokenDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::invalid("distribution must not be empty"));
        }
        if probs.iter().any(|&p| !p.is_finite() || p < 0.0) {
            return Err(Error::invalid("distribution entries must be finite and >= 0"));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "distribution sums to {sum}, expected 1"
            )));
        }
        Ok(TokenDistribution { probs })
    }

    pub fn uniform(n: usize) -> Self {
        TokenDistribution {
            probs: vec![1.0 / n as f64; n],
        }
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn entropy_bits(&self) -> f64 {
        -self
            .probs
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|&p| p * p.log2())
            .sum::<f64>()
    }

    /// Condition on not sampling `index` (zero it out and renormalize).
    pub fn without_token(&self, index: u32) -> Result<Self> {
        let mut probs = self.probs.clone();
        let idx = index as usize;
        if idx >= probs.len() {
            return Err(Error::invalid(format!("token index {index} out of range")));
        }
        probs[idx] = 0.0;
        let sum: f64 = probs.iter().sum();
        if sum < 1e-12 {
            return Err(Error::invalid(
                "distribution has no mass outside the excluded token",
            ));
        }
        for p in &mut probs {
            *p /= sum;
        }
        Ok(TokenDistribution { probs })
    }

    /// Inverse-CDF sampling.
    pub fn sample<R: rand::Rng>(&self, rng: &mut R) -> u32 {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, &p) in self.probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return i as u32;
            }
        }
        (self.probs.len() - 1) as u32
    }

    /// Normalize non-negative weights into a distribution; degenerate
    /// weights (zero or non-finite sum) fall back to uniform.
    pub fn from_weights(mut raw: Vec<f64>) -> Self {
        let sum: f64 = raw.iter().sum();
        if sum <= 0.0 || !sum.is_finite() {
            return TokenDistribution::uniform(raw.len());
        }
        for p in &mut raw {
            *p /= sum;
        }
        TokenDistribution { probs: raw }
    }
}

/// A next-token-distribution provider over a fixed vocabulary.
pub trait LanguageModel: Send + Sync {
    fn vocabulary(&self) -> &Vocabulary;

    fn next_distribution(&self, prompt: &str, prior_tokens: &[u32]) -> Result<TokenDistribution>;

    /// Sample a response: walk the model until the termination token or
    /// `max_tokens`. The termination token, when drawn, is included.
    fn sample_response(&self, prompt: &str, max_tokens: usize, rng_seed: u64) -> Result<Vec<u32>> {
        if max_tokens == 0 {
            return Err(Error::invalid("max_tokens must be at least 1"));
        }
        let ter = self.vocabulary().ter_index();
        let mut rng = ChaCha20Rng::seed_from_u64(rng_seed);
        let mut tokens = Vec::new();
        for _ in 0..max_tokens {
            let dist = self.next_distribution(prompt, &tokens)?;
            let tok = dist.sample(&mut rng);
            tokens.push(tok);
            if tok == ter {
                break;
            }
        }
        Ok(tokens)
    }
}

/// Configuration for building a model; part of the codec profile file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    Synthetic {
        seed: u64,
        /// Target per-step Shannon entropy in bits; defaults to the maximum
        /// (log2 of the vocabulary size).
        #[serde(default)]
        entropy_target: Option<f64>,
    },
    Ngram {
        corpus: PathBuf,
        #[serde(default = "default_order")]
        order: usize,
        #[serde(default = "default_smoothing")]
        smoothing: f64,
    },
    Remote {
        endpoint: String,
        model: String,
        #[serde(default = "default_auth_env")]
        auth_env: String,
        #[serde(default = "default_top_logprobs")]
        top_logprobs: usize,
    },
}

fn default_order() -> usize {
    3
}

fn default_smoothing() -> f64 {
    0.1
}

fn default_auth_env() -> String {
    "STEGOKIT_API_KEY".to_string()
}

fn default_top_logprobs() -> usize {
    20
}

impl ModelSpec {
    pub fn build(&self, vocab: Vocabulary) -> Result<Box<dyn LanguageModel>> {
        match self {
            ModelSpec::Synthetic {
                seed,
                entropy_target,
            } => Ok(Box::new(SyntheticModel::new(vocab, *seed, *entropy_target))),
            ModelSpec::Ngram {
                corpus,
                order,
                smoothing,
            } => Ok(Box::new(NgramModel::train_from_file(
                vocab, corpus, *order, *smoothing,
            )?)),
            ModelSpec::Remote {
                endpoint,
                model,
                auth_env,
                top_logprobs,
            } => Ok(Box::new(RemoteModel::new(
                vocab,
                endpoint.clone(),
                model.clone(),
                auth_env.clone(),
                *top_logprobs,
            ))),
        }
    }
}

/// Deterministic high-entropy covertext channel. The distribution at each
/// step is a symmetric Dirichlet draw whose generator is seeded by a hash of
/// (seed, prompt, prior tokens), so the channel is context sensitive yet
/// exactly reproducible.
pub struct SyntheticModel {
    vocab: Vocabulary,
    seed: u64,
    alpha: f64,
}

impl SyntheticModel {
    pub fn new(vocab: Vocabulary, seed: u64, entropy_target: Option<f64>) -> Self {
        let n = vocab.size();
        let alpha = match entropy_target {
            Some(bits) => concentration_for_entropy(n, bits),
            None => 1.0,
        };
        SyntheticModel { vocab, seed, alpha }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    fn step_rng(&self, prompt: &str, prior_tokens: &[u32]) -> ChaCha20Rng {
        let mut hasher = Sha256::new();
        hasher.update([0x10u8]);
        hasher.update(self.seed.to_be_bytes());
        hasher.update((prompt.len() as u64).to_be_bytes());
        hasher.update(prompt.as_bytes());
        hasher.update((prior_tokens.len() as u32).to_be_bytes());
        for &t in prior_tokens {
            hasher.update(t.to_be_bytes());
        }
        ChaCha20Rng::from_seed(hasher.finalize().into())
    }
}

impl LanguageModel for SyntheticModel {
    fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    fn next_distribution(&self, prompt: &str, prior_tokens: &[u32]) -> Result<TokenDistribution> {
        for &t in prior_tokens {
            if t as usize >= self.vocab.size() {
                return Err(Error::invalid(format!("prior token {t} out of range")));
            }
        }
        let mut rng = self.step_rng(prompt, prior_tokens);
        let gamma = Gamma::new(self.alpha, 1.0)
            .map_err(|e| Error::invalid(format!("bad Dirichlet concentration: {e}")))?;
        let raw: Vec<f64> = (0..self.vocab.size())
            .map(|_| gamma.sample(&mut rng))
            .collect();
        Ok(TokenDistribution::from_weights(raw))
    }
}

/// Solve for the symmetric Dirichlet concentration whose expected sample
/// entropy matches `target_bits`. E[H] = psi(N*a + 1) - psi(a + 1) nats.
pub fn concentration_for_entropy(n: usize, target_bits: f64) -> f64 {
    const ALPHA_MIN: f64 = 1e-4;
    const ALPHA_MAX: f64 = 1e6;
    let expected_bits = |alpha: f64| {
        (digamma(n as f64 * alpha + 1.0) - digamma(alpha + 1.0)) / std::f64::consts::LN_2
    };
    let max_bits = (n as f64).log2();
    if target_bits >= max_bits || expected_bits(ALPHA_MAX) <= target_bits {
        return ALPHA_MAX;
    }
    if target_bits <= 0.0 || expected_bits(ALPHA_MIN) >= target_bits {
        return ALPHA_MIN;
    }
    let (mut lo, mut hi) = (ALPHA_MIN.ln(), ALPHA_MAX.ln());
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if expected_bits(mid.exp()) < target_bits {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (0.5 * (lo + hi)).exp()
}

/// Corpus n-gram model with additive smoothing. `order` is the number of
/// context tokens (order 1 looks at the single preceding token). Contexts
/// shorter than `order`, including the start of the training stream, are
/// left-padded with the termination index.
pub struct NgramModel {
    vocab: Vocabulary,
    order: usize,
    smoothing: f64,
    counts: HashMap<Vec<u32>, HashMap<u32, u32>>,
}

impl NgramModel {
    pub fn train(vocab: Vocabulary, corpus_text: &str, order: usize, smoothing: f64) -> Result<Self> {
        if order == 0 {
            return Err(Error::invalid("ngram order must be at least 1"));
        }
        if smoothing <= 0.0 {
            return Err(Error::invalid("smoothing must be positive"));
        }
        let tokens = vocab.tokenize(corpus_text)?;
        let ter = vocab.ter_index();
        let mut counts: HashMap<Vec<u32>, HashMap<u32, u32>> = HashMap::new();
        for (i, &tok) in tokens.iter().enumerate() {
            let mut ctx = Vec::with_capacity(order);
            for back in (1..=order).rev() {
                if i >= back {
                    ctx.push(tokens[i - back]);
                } else {
                    ctx.push(ter);
                }
            }
            // ctx currently oldest-first with ter padding on the left
            *counts.entry(ctx).or_default().entry(tok).or_insert(0) += 1;
        }
        Ok(NgramModel {
            vocab,
            order,
            smoothing,
            counts,
        })
    }

    pub fn train_from_file(
        vocab: Vocabulary,
        path: impl AsRef<Path>,
        order: usize,
        smoothing: f64,
    ) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        NgramModel::train(vocab, &text, order, smoothing)
    }

    fn context_of(&self, prompt_tokens: &[u32], prior: &[u32]) -> Vec<u32> {
        crate::prf::cgram_window(
            prompt_tokens,
            prior,
            prior.len(),
            self.order,
            self.vocab.ter_index(),
        )
    }
}

impl LanguageModel for NgramModel {
    fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    fn next_distribution(&self, prompt: &str, prior_tokens: &[u32]) -> Result<TokenDistribution> {
        let prompt_tokens = if prompt.is_empty() {
            Vec::new()
        } else {
            self.vocab.tokenize(prompt)?
        };
        let ctx = self.context_of(&prompt_tokens, prior_tokens);
        let n = self.vocab.size();
        let table = self.counts.get(&ctx);
        let total: f64 = table
            .map(|t| t.values().map(|&c| c as f64).sum())
            .unwrap_or(0.0);
        let denom = total + self.smoothing * n as f64;
        let probs: Vec<f64> = (0..n as u32)
            .map(|tok| {
                let c = table.and_then(|t| t.get(&tok)).copied().unwrap_or(0) as f64;
                (c + self.smoothing) / denom
            })
            .collect();
        TokenDistribution::new(probs)
    }
}

/// Adapter for an OpenAI-compatible completions endpoint.
///
/// Real chat APIs expose at most the top-k log probabilities, not the full
/// next-token distribution, so `next_distribution` places the reported mass
/// on the matching vocabulary entries and spreads the remainder uniformly.
/// This adapter is best used through `sample_response`, which delegates text
/// generation to the service itself.
pub struct RemoteModel {
    vocab: Vocabulary,
    endpoint: String,
    model: String,
    auth_env: String,
    top_logprobs: usize,
}

impl RemoteModel {
    pub fn new(
        vocab: Vocabulary,
        endpoint: String,
        model: String,
        auth_env: String,
        top_logprobs: usize,
    ) -> Self {
        RemoteModel {
            vocab,
            endpoint,
            model,
            auth_env,
            top_logprobs,
        }
    }

    fn auth_token(&self) -> Result<String> {
        std::env::var(&self.auth_env).map_err(|_| {
            Error::Remote(format!(
                "auth token environment variable {} is not set",
                self.auth_env
            ))
        })
    }

    fn post_with_retries(&self, path: &str, body: &serde_json::Value) -> Result<serde_json::Value> {
        let url = format!("{}{}", self.endpoint.trim_end_matches('/'), path);
        let token = self.auth_token()?;
        let mut delay = std::time::Duration::from_millis(250);
        let mut last_err = String::new();
        for attempt in 0..3 {
            if attempt > 0 {
                std::thread::sleep(delay);
                delay *= 2;
            }
            let result = ureq::post(&url)
                .header("Authorization", &format!("Bearer {token}"))
                .send_json(body.clone());
            match result {
                Ok(mut response) => {
                    return response
                        .body_mut()
                        .read_json::<serde_json::Value>()
                        .map_err(|e| Error::Remote(format!("bad response body: {e}")));
                }
                Err(ureq::Error::StatusCode(code)) => {
                    last_err = format!("http status {code}");
                    // Retry throttling and server errors only.
                    if !(code == 429 || code >= 500) {
                        return Err(Error::Remote(last_err));
                    }
                }
                Err(e) => {
                    last_err = format!("transport error: {e}");
                }
            }
        }
        Err(Error::Remote(format!(
            "giving up after 3 attempts: {last_err}"
        )))
    }
}

impl LanguageModel for RemoteModel {
    fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    fn next_distribution(&self, prompt: &str, prior_tokens: &[u32]) -> Result<TokenDistribution> {
        let prior_text = self.vocab.render(prior_tokens)?;
        let full_prompt = if prior_text.is_empty() {
            prompt.to_string()
        } else if prompt.is_empty() {
            prior_text
        } else {
            format!("{prompt} {prior_text}")
        };
        let body = serde_json::json!({
            "model": self.model,
            "prompt": full_prompt,
            "max_tokens": 1,
            "logprobs": self.top_logprobs,
        });
        let response = self.post_with_retries("/completions", &body)?;
        let top = response["choices"][0]["logprobs"]["top_logprobs"][0]
            .as_object()
            .ok_or_else(|| Error::Remote("response carries no logprobs".into()))?;

        let n = self.vocab.size();
        let mut probs = vec![0.0f64; n];
        let mut covered = 0.0;
        for (token_text, lp) in top {
            if let (Some(idx), Some(lp)) = (self.vocab.lookup(token_text.trim()), lp.as_f64()) {
                probs[idx as usize] += lp.exp();
                covered += lp.exp();
            }
        }
        let leftover = (1.0 - covered).max(0.0);
        for p in &mut probs {
            *p += leftover / n as f64;
        }
        Ok(TokenDistribution::from_weights(probs))
    }

    fn sample_response(&self, prompt: &str, max_tokens: usize, _rng_seed: u64) -> Result<Vec<u32>> {
        if max_tokens == 0 {
            return Err(Error::invalid("max_tokens must be at least 1"));
        }
        let body = serde_json::json!({
            "model": self.model,
            "prompt": prompt,
            "max_tokens": max_tokens,
            "temperature": 1.0,
        });
        let response = self.post_with_retries("/completions", &body)?;
        let text = response["choices"][0]["text"]
            .as_str()
            .ok_or_else(|| Error::Remote("response carries no text".into()))?;
        self.vocab.tokenize(text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab_n(n: usize) -> Vocabulary {
        let mut tokens: Vec<String> = (0..n - 1).map(|i| format!("w{i}")).collect();
        tokens.push("</s>".to_string());
        Vocabulary::new(tokens, (n - 1) as u32).unwrap()
    }

    #[test]
    fn synthetic_is_deterministic() {
        let model = SyntheticModel::new(vocab_n(16), 42, Some(4.0));
        let a = model.next_distribution("p", &[1, 2]).unwrap();
        let b = model.next_distribution("p", &[1, 2]).unwrap();
        assert_eq!(a, b);
        let c = model.next_distribution("p", &[1, 3]).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn synthetic_distributions_are_valid() {
        let model = SyntheticModel::new(vocab_n(32), 7, Some(2.5));
        for i in 0u32..10_000 {
            let dist = model.next_distribution("q", &[i % 32, (i * 7) % 32]).unwrap();
            let sum: f64 = dist.probs().iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
            assert!(dist.probs().iter().all(|&p| p >= 0.0));
        }
    }

    #[test]
    fn flat_target_gives_flat_draws() {
        let n = 64;
        let model = SyntheticModel::new(vocab_n(n), 3, Some((n as f64).log2()));
        let bound = 2.0 / n as f64;
        for i in 0..1000u32 {
            let dist = model.next_distribution("", &[i % 64]).unwrap();
            let max = dist.probs().iter().cloned().fold(0.0, f64::max);
            assert!(max <= bound, "draw {i} has max entry {max}");
        }
    }

    #[test]
    fn entropy_tracks_target() {
        let n = 64;
        let max_bits = (n as f64).log2();
        let model = SyntheticModel::new(vocab_n(n), 11, Some(max_bits));
        let mut total = 0.0;
        for i in 0..1000u32 {
            let dist = model
                .next_distribution("", &[i % 64, (i / 64) % 64])
                .unwrap();
            total += dist.entropy_bits();
        }
        let mean = total / 1000.0;
        assert!(mean >= 0.9 * max_bits, "mean entropy {mean}");

        // A mid-range target lands near the requested value too.
        let mid = SyntheticModel::new(vocab_n(n), 11, Some(3.0));
        let mut total = 0.0;
        for i in 0..500u32 {
            total += mid
                .next_distribution("", &[i % 64, (i / 64) % 64])
                .unwrap()
                .entropy_bits();
        }
        let mean = total / 500.0;
        assert!((mean - 3.0).abs() < 0.5, "mean entropy {mean} for target 3");
    }

    #[test]
    fn ngram_hand_counted_bigram_table() {
        let vocab = Vocabulary::new(vec!["a".into(), "b".into(), "</s>".into()], 2).unwrap();
        let model = NgramModel::train(vocab, "a b a b a", 1, 0.1).unwrap();
        let dist = model.next_distribution("", &[0]).unwrap(); // after "a"
        // counts: a -> b twice; smoothed over N=3.
        let denom = 2.0 + 0.1 * 3.0;
        assert!((dist.probs()[1] - 2.1 / denom).abs() < 1e-12);
        assert!((dist.probs()[0] - 0.1 / denom).abs() < 1e-12);
        assert!((dist.probs()[2] - 0.1 / denom).abs() < 1e-12);
        // Unsmoothed, all non-ter mass after "a" sits on "b".
        let non_ter = dist.probs()[0] + dist.probs()[1];
        assert!((dist.probs()[1] / non_ter - 2.1 / 2.2).abs() < 1e-12);
    }

    #[test]
    fn ngram_unseen_context_is_uniform() {
        let vocab = Vocabulary::new(vec!["a".into(), "b".into(), "</s>".into()], 2).unwrap();
        let model = NgramModel::train(vocab, "a b a b a", 1, 0.1).unwrap();
        let dist = model.next_distribution("", &[2]).unwrap(); // after ter: only "a" seen
        assert!(dist.probs().iter().all(|&p| p > 0.0));
    }

    struct FixedModel {
        vocab: Vocabulary,
        probs: Vec<f64>,
    }

    impl LanguageModel for FixedModel {
        fn vocabulary(&self) -> &Vocabulary {
            &self.vocab
        }
        fn next_distribution(&self, _: &str, _: &[u32]) -> Result<TokenDistribution> {
            TokenDistribution::new(self.probs.clone())
        }
    }

    #[test]
    fn response_terminates_on_ter() {
        let vocab = Vocabulary::new(vec!["a".into(), "</s>".into()], 1).unwrap();
        let model = FixedModel {
            vocab,
            probs: vec![0.0, 1.0],
        };
        let resp = model.sample_response("", 10, 0).unwrap();
        assert_eq!(resp, vec![1]);
    }

    #[test]
    fn response_respects_token_cap() {
        let vocab = Vocabulary::new(vec!["a".into(), "b".into(), "</s>".into()], 2).unwrap();
        let model = FixedModel {
            vocab,
            probs: vec![0.5, 0.5, 0.0],
        };
        let resp = model.sample_response("", 5, 1).unwrap();
        assert_eq!(resp.len(), 5);
        assert!(resp.iter().all(|&t| t != 2));
    }

    #[test]
    fn response_reproducible_for_fixed_seed() {
        let model = SyntheticModel::new(vocab_n(16), 5, Some(3.0));
        let a = model.sample_response("hi", 20, 99).unwrap();
        let b = model.sample_response("hi", 20, 99).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn without_token_renormalizes() {
        let dist = TokenDistribution::new(vec![0.5, 0.25, 0.25]).unwrap();
        let cond = dist.without_token(0).unwrap();
        assert!((cond.probs()[1] - 0.5).abs() < 1e-12);
        assert!((cond.probs()[2] - 0.5).abs() < 1e-12);
        let point = TokenDistribution::new(vec![1.0, 0.0]).unwrap();
        assert!(point.without_token(0).is_err());
    }

    #[test]
    fn zero_max_tokens_rejected() {
        let model = SyntheticModel::new(vocab_n(8), 1, None);
        assert!(model.sample_response("", 0, 0).is_err());
    }
}

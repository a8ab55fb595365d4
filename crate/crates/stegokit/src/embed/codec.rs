//! Chunked rejection-sampling codec.
//!
//! The message is split into hash-sized chunks. For each chunk the encoder
//! samples candidate passages from the model until one's embedding hashes to
//! the chunk's target bits, then appends it to the document; accepted chunks
//! are folded back into the prompt so later chunks stay in context. Chunks
//! are separated by a blank line, and the decoder recovers the message by
//! hashing each chunk's embedding and concatenating the outputs.
//!
//! When a chunk exhausts its attempt budget the last candidate is emitted
//! anyway and the miss is recorded; an outer error-correcting code is
//! expected to absorb such misses.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::{ChannelHistory, CodecParams, HiddenMessage, SchemeKind, StegoDocument};
use crate::ecc::{ecc_decode, ecc_encode, EccSpec};
use crate::embed::embedder::{embed_text, Embedder};
use crate::embed::lsh::{lsh_hash, LshModel};
use crate::error::{Error, Result};
use crate::langmodel::LanguageModel;

/// Separator between chunks in the rendered document.
pub const CHUNK_DELIMITER: &str = "\n\n";

/// Embedding-codec parameters, shared by sender and receiver.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbedParams {
    /// Bits carried per chunk; must match the LSH output width.
    pub hash_bits: usize,
    /// Message length in bits (before error correction).
    pub n_bits: usize,
    /// Rejection-sampling budget per chunk.
    #[serde(default = "default_max_attempts")]
    pub max_attempts: usize,
    /// Token budget per candidate passage.
    #[serde(default = "default_chunk_tokens")]
    pub chunk_max_tokens: usize,
    #[serde(default)]
    pub ecc: EccSpec,
}

fn default_max_attempts() -> usize {
    64
}

fn default_chunk_tokens() -> usize {
    24
}

impl EmbedParams {
    pub fn validate(&self) -> Result<()> {
        if self.hash_bits == 0 {
            return Err(Error::invalid("hash_bits must be at least 1"));
        }
        if self.n_bits == 0 {
            return Err(Error::invalid("n_bits must be at least 1"));
        }
        if self.max_attempts == 0 {
            return Err(Error::invalid("max_attempts must be at least 1"));
        }
        if self.chunk_max_tokens == 0 {
            return Err(Error::invalid("chunk_max_tokens must be at least 1"));
        }
        self.ecc.validate()
    }
}

/// The per-chunk bit targets for a message: `ceil(n / hash_bits)` chunks,
/// the last one zero-padded. Concatenating the targets and truncating to
/// `n` bits recovers the message.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChunkPlan {
    pub targets: Vec<Vec<u8>>,
}

impl ChunkPlan {
    pub fn build(message_bits: &[u8], hash_bits: usize) -> Result<Self> {
        if hash_bits == 0 {
            return Err(Error::invalid("hash_bits must be at least 1"));
        }
        if message_bits.is_empty() {
            return Err(Error::invalid("message must not be empty"));
        }
        let targets = message_bits
            .chunks(hash_bits)
            .map(|chunk| {
                let mut t = chunk.to_vec();
                t.resize(hash_bits, 0);
                t
            })
            .collect();
        Ok(ChunkPlan { targets })
    }

    pub fn chunk_count(&self) -> usize {
        self.targets.len()
    }
}

/// Attempt bookkeeping from an encode.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttemptReport {
    /// Candidates drawn per chunk (including the accepted one).
    pub attempts: Vec<usize>,
    /// Chunks that exhausted the budget and were emitted with a wrong hash.
    pub misses: Vec<bool>,
}

impl AttemptReport {
    pub fn total_attempts(&self) -> usize {
        self.attempts.iter().sum()
    }

    pub fn mean_attempts(&self) -> f64 {
        if self.attempts.is_empty() {
            0.0
        } else {
            self.total_attempts() as f64 / self.attempts.len() as f64
        }
    }

    pub fn miss_count(&self) -> usize {
        self.misses.iter().filter(|&&m| m).count()
    }
}

fn attempt_seed(master_seed: u64, chunk: usize, attempt: usize) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update([0x30u8]);
    hasher.update(master_seed.to_be_bytes());
    hasher.update((chunk as u64).to_be_bytes());
    hasher.update((attempt as u64).to_be_bytes());
    u64::from_be_bytes(hasher.finalize()[..8].try_into().unwrap())
}

/// Encode a message by rejection sampling one chunk at a time.
pub fn encode(
    message: &HiddenMessage,
    model: &dyn LanguageModel,
    embedder: &dyn Embedder,
    lsh: &LshModel,
    history: &ChannelHistory,
    params: &EmbedParams,
    rng_seed: u64,
) -> Result<(StegoDocument, AttemptReport)> {
    params.validate()?;
    if message.len() != params.n_bits {
        return Err(Error::invalid(format!(
            "message has {} bits, params expect {}",
            message.len(),
            params.n_bits
        )));
    }
    if lsh.hash_bits() != params.hash_bits {
        return Err(Error::invalid(format!(
            "lsh outputs {} bits per hash, params expect {}",
            lsh.hash_bits(),
            params.hash_bits
        )));
    }

    let plan = ChunkPlan::build(message.bits(), params.hash_bits)?;
    let vocab = model.vocabulary();
    let ter = vocab.ter_index();

    let mut accepted: Vec<String> = Vec::with_capacity(plan.chunk_count());
    let mut report = AttemptReport::default();

    for (chunk_idx, target) in plan.targets.iter().enumerate() {
        // Later chunks condition on everything accepted so far.
        let prompt = if accepted.is_empty() {
            history.prompt.clone()
        } else if history.prompt.is_empty() {
            accepted.join(" ")
        } else {
            format!("{} {}", history.prompt, accepted.join(" "))
        };

        let mut attempts = 0usize;
        let mut last_candidate: Option<String> = None;
        let mut hit = false;
        while attempts < params.max_attempts {
            attempts += 1;
            let seed = attempt_seed(rng_seed, chunk_idx, attempts);
            let mut tokens = model.sample_response(&prompt, params.chunk_max_tokens, seed)?;
            if tokens.last() == Some(&ter) {
                tokens.pop();
            }
            if tokens.is_empty() {
                continue; // the model terminated immediately; burn the attempt
            }
            let text = vocab.render(&tokens)?;
            let vector = embed_text(embedder, &text)?;
            let hash = lsh_hash(lsh, &vector)?;
            let matched = hash == *target;
            last_candidate = Some(text);
            if matched {
                hit = true;
                break;
            }
        }

        let Some(candidate) = last_candidate else {
            return Err(Error::invalid(format!(
                "chunk {chunk_idx}: model produced no usable candidate in {} attempts",
                params.max_attempts
            )));
        };
        accepted.push(candidate);
        report.attempts.push(attempts);
        report.misses.push(!hit);
    }

    let document = StegoDocument {
        scheme: SchemeKind::Embedding,
        token_indices: Vec::new(),
        text: accepted.join(CHUNK_DELIMITER),
        params: CodecParams::Embedding(params.clone()),
        history_digest: history.digest(),
    };
    Ok((document, report))
}

/// Split a rendered document into its chunks.
pub fn split_chunks(text: &str) -> Vec<&str> {
    text.split(CHUNK_DELIMITER)
        .map(str::trim)
        .filter(|chunk| !chunk.is_empty())
        .collect()
}

/// Decode the first `n_bits` of a document's concatenated chunk hashes.
pub fn decode(
    text: &str,
    embedder: &dyn Embedder,
    lsh: &LshModel,
    n_bits: usize,
) -> Result<HiddenMessage> {
    if n_bits == 0 {
        return Err(Error::invalid("n_bits must be at least 1"));
    }
    let hash_bits = lsh.hash_bits();
    let needed = n_bits.div_ceil(hash_bits);
    let chunks = split_chunks(text);
    if chunks.len() < needed {
        return Err(Error::DecodeFailed(format!(
            "expected {needed} chunks, found {}",
            chunks.len()
        )));
    }
    let mut bits = Vec::with_capacity(needed * hash_bits);
    for chunk in chunks.iter().take(needed) {
        let vector = embed_text(embedder, chunk)?;
        bits.extend(lsh_hash(lsh, &vector)?);
    }
    bits.truncate(n_bits);
    HiddenMessage::from_bits(bits)
}

/// Encode with the profile's error-correcting code applied first.
pub fn encode_with_ecc(
    message: &HiddenMessage,
    model: &dyn LanguageModel,
    embedder: &dyn Embedder,
    lsh: &LshModel,
    history: &ChannelHistory,
    params: &EmbedParams,
    rng_seed: u64,
) -> Result<(StegoDocument, AttemptReport)> {
    let coded = ecc_encode(&params.ecc, message.bits())?;
    let inner = EmbedParams {
        n_bits: coded.len(),
        ..params.clone()
    };
    let coded_message = HiddenMessage::from_bits(coded)?;
    encode(&coded_message, model, embedder, lsh, history, &inner, rng_seed)
}

/// Decode and strip the error-correcting code, returning `message_bits` bits.
pub fn decode_with_ecc(
    text: &str,
    embedder: &dyn Embedder,
    lsh: &LshModel,
    params: &EmbedParams,
) -> Result<HiddenMessage> {
    let coded_len = params.ecc.encoded_len(params.n_bits)?;
    let coded = decode(text, embedder, lsh, coded_len)?;
    let mut bits = ecc_decode(&params.ecc, coded.bits())?;
    bits.truncate(params.n_bits);
    HiddenMessage::from_bits(bits)
}

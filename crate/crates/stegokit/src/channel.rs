//! Shared domain types: vocabularies, conversation histories, hidden
//! messages, key material, and the on-disk stego document format.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::embed::codec::EmbedParams;
use crate::error::{Error, Result};
use crate::prf;
use crate::watermark::WatermarkParams;

/// Default key size in bits.
pub const DEFAULT_KEY_BITS: usize = 256;

/// An ordered token set. The index of a token is its line number in the
/// vocabulary file, so both parties see the same index for the same token.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    ter_index: u32,
    unknown_index: Option<u32>,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    pub fn new(tokens: Vec<String>, ter_index: u32) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::invalid("vocabulary must not be empty"));
        }
        if ter_index as usize >= tokens.len() {
            return Err(Error::invalid(format!(
                "ter_index {ter_index} out of range for vocabulary of size {}",
                tokens.len()
            )));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, tok) in tokens.iter().enumerate() {
            if tok.is_empty() || tok.chars().any(char::is_whitespace) {
                return Err(Error::invalid(format!(
                    "token {i:?} is empty or contains whitespace: {tok:?}"
                )));
            }
            if index.insert(tok.clone(), i as u32).is_some() {
                return Err(Error::invalid(format!("duplicate token {tok:?}")));
            }
        }
        Ok(Vocabulary {
            tokens,
            ter_index,
            unknown_index: None,
            index,
        })
    }

    /// Designate a token index that out-of-vocabulary words map to.
    pub fn with_unknown(mut self, unknown_index: u32) -> Result<Self> {
        if unknown_index as usize >= self.tokens.len() {
            return Err(Error::invalid(format!(
                "unknown_index {unknown_index} out of range"
            )));
        }
        self.unknown_index = Some(unknown_index);
        Ok(self)
    }

    /// Load a vocabulary from a UTF-8 file with one token per line.
    /// The 0-based line number is the token index.
    pub fn from_file(path: impl AsRef<Path>, ter_index: u32) -> Result<Self> {
        let contents = std::fs::read_to_string(path)?;
        let tokens: Vec<String> = contents
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(String::from)
            .collect();
        Vocabulary::new(tokens, ter_index)
    }

    pub fn to_file(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = String::new();
        for tok in &self.tokens {
            out.push_str(tok);
            out.push('\n');
        }
        std::fs::write(path, out)?;
        Ok(())
    }

    pub fn size(&self) -> usize {
        self.tokens.len()
    }

    pub fn ter_index(&self) -> u32 {
        self.ter_index
    }

    pub fn unknown_index(&self) -> Option<u32> {
        self.unknown_index
    }

    pub fn token(&self, index: u32) -> Option<&str> {
        self.tokens.get(index as usize).map(String::as_str)
    }

    pub fn lookup(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    /// Whitespace tokenization through the vocabulary. Out-of-vocabulary
    /// words map to the unknown token when one is designated, otherwise
    /// they are an error.
    pub fn tokenize(&self, text: &str) -> Result<Vec<u32>> {
        text.split_whitespace()
            .map(|word| {
                self.lookup(word).or(self.unknown_index).ok_or_else(|| {
                    Error::invalid(format!(
                        "word {word:?} is not in the vocabulary and no unknown token is set"
                    ))
                })
            })
            .collect()
    }

    /// Render token indices back to text, space separated.
    pub fn render(&self, indices: &[u32]) -> Result<String> {
        let words: Result<Vec<&str>> = indices
            .iter()
            .map(|&i| {
                self.token(i)
                    .ok_or_else(|| Error::invalid(format!("token index {i} out of range")))
            })
            .collect();
        Ok(words?.join(" "))
    }
}

/// Conversation state shared by sender and receiver. Append-only: the salt
/// is a pure function of this value.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelHistory {
    pub prompt: String,
    pub prior_messages: Vec<String>,
}

impl ChannelHistory {
    pub fn new(prompt: impl Into<String>) -> Self {
        ChannelHistory {
            prompt: prompt.into(),
            prior_messages: Vec::new(),
        }
    }

    pub fn push(&mut self, message: impl Into<String>) {
        self.prior_messages.push(message.into());
    }

    pub fn message_count(&self) -> u64 {
        self.prior_messages.len() as u64
    }

    /// Digest binding a stego document to the history it was encoded under.
    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update((self.prior_messages.len() as u64).to_be_bytes());
        for msg in &self.prior_messages {
            hasher.update((msg.len() as u64).to_be_bytes());
            hasher.update(msg.as_bytes());
        }
        hasher.update((self.prompt.len() as u64).to_be_bytes());
        hasher.update(self.prompt.as_bytes());
        hex::encode(hasher.finalize())
    }
}

/// Per-message salt mixed into every PRF call. Encoded as the number of
/// prior messages, as an 8-byte big-endian integer, so both parties can
/// recompute it without extra state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Salt(pub [u8; 8]);

impl Salt {
    pub fn as_bytes(&self) -> &[u8; 8] {
        &self.0
    }
}

impl fmt::Display for Salt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", hex::encode(self.0))
    }
}

/// Derive the salt from a history. Equal histories yield equal salts;
/// histories with different prior-message counts yield distinct salts.
pub fn derive_salt(history: &ChannelHistory) -> Salt {
    Salt(history.message_count().to_be_bytes())
}

/// A hidden message: a nonempty bit string.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HiddenMessage {
    bits: Vec<u8>,
}

impl HiddenMessage {
    pub fn from_bits(bits: Vec<u8>) -> Result<Self> {
        if bits.is_empty() {
            return Err(Error::invalid("message must contain at least one bit"));
        }
        if bits.iter().any(|&b| b > 1) {
            return Err(Error::invalid("message bits must be 0 or 1"));
        }
        Ok(HiddenMessage { bits })
    }

    /// Parse a string like "1011".
    pub fn parse(s: &str) -> Result<Self> {
        let bits: Result<Vec<u8>> = s
            .trim()
            .chars()
            .map(|ch| match ch {
                '0' => Ok(0),
                '1' => Ok(1),
                other => Err(Error::invalid(format!("invalid message bit {other:?}"))),
            })
            .collect();
        HiddenMessage::from_bits(bits?)
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    /// Indices i with bit i set, 0-based.
    pub fn one_positions(&self) -> Vec<usize> {
        self.bits
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| (b == 1).then_some(i))
            .collect()
    }
}

impl fmt::Display for HiddenMessage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.bits {
            write!(f, "{b}")?;
        }
        Ok(())
    }
}

/// Master key plus the per-bit subkeys derived from it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WatermarkKeySet {
    master_key: Vec<u8>,
    subkeys: Vec<[u8; 32]>,
}

impl WatermarkKeySet {
    /// Derive `n_bits` subkeys from a master key.
    pub fn derive(master_key: &[u8], n_bits: usize) -> Result<Self> {
        if master_key.is_empty() {
            return Err(Error::invalid("master key must not be empty"));
        }
        let subkeys = derive_subkeys(master_key, n_bits)?;
        Ok(WatermarkKeySet {
            master_key: master_key.to_vec(),
            subkeys,
        })
    }

    pub fn master_key(&self) -> &[u8] {
        &self.master_key
    }

    pub fn subkeys(&self) -> &[[u8; 32]] {
        &self.subkeys
    }

    pub fn n_bits(&self) -> usize {
        self.subkeys.len()
    }

    /// Read a master key file: lowercase hex, `key_bits / 8` bytes.
    pub fn master_from_file(path: impl AsRef<Path>, key_bits: usize) -> Result<Vec<u8>> {
        let text = std::fs::read_to_string(path)?;
        let bytes = hex::decode(text.trim())
            .map_err(|e| Error::invalid(format!("key file is not valid hex: {e}")))?;
        if bytes.len() * 8 != key_bits {
            return Err(Error::invalid(format!(
                "key file holds {} bits, expected {key_bits}",
                bytes.len() * 8
            )));
        }
        Ok(bytes)
    }

    pub fn master_to_file(path: impl AsRef<Path>, master_key: &[u8]) -> Result<()> {
        std::fs::write(path, format!("{}\n", hex::encode(master_key)))?;
        Ok(())
    }
}

/// Derive `count` subkeys as PRF(master, index). Index encoding is a 4-byte
/// big-endian integer behind a domain-separation prefix, documented in the
/// `prf` module; indices start at 1.
pub fn derive_subkeys(master_key: &[u8], count: usize) -> Result<Vec<[u8; 32]>> {
    if count == 0 {
        return Err(Error::invalid("subkey count must be at least 1"));
    }
    if count > u32::MAX as usize {
        return Err(Error::invalid("subkey count too large"));
    }
    Ok((1..=count as u32)
        .map(|i| prf::derive_subkey(master_key, i))
        .collect())
}

/// Which codec produced a stego document.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeKind {
    Watermark,
    Embedding,
}

/// Parameters a document was encoded with, carried inside the document so
/// the receiving side can mirror every choice.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum CodecParams {
    Watermark(WatermarkParams),
    Embedding(EmbedParams),
}

/// A covertext carrying a hidden message, together with everything needed
/// to decode it (given the key and history).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StegoDocument {
    pub scheme: SchemeKind,
    /// Token indices for watermark documents; empty for embedding documents,
    /// whose chunk structure lives in `text`.
    #[serde(default)]
    pub token_indices: Vec<u32>,
    pub text: String,
    pub params: CodecParams,
    /// Digest of the history at encode time; provenance metadata.
    pub history_digest: String,
}

impl StegoDocument {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        Ok(serde_json::from_str(json)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        StegoDocument::from_json(&text)
    }
}

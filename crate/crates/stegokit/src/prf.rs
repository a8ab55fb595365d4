//! Keyed pseudorandom function built on HMAC-SHA256, providing the per-step
//! label vector and the key-selection index.
//!
//! The exact byte layouts below are part of the wire contract: encoder and
//! decoder (and any independent implementation) must agree on them bit for
//! bit.
//!
//! - Subkey derivation (tag `0x01`):
//!   `subkey_i = HMAC(master_key, 0x01 || be32(i))`, `i` starting at 1.
//! - Label vector (tag `0x02`), expanded in counter mode:
//!   `block_t = HMAC(key, 0x02 || salt(8 bytes) || be32(len(cgram)) ||
//!   be32(token_0) || ... || be32(token_{c-1}) || be32(t))` for
//!   `t = 0, 1, ...`; blocks are concatenated and truncated to N bits.
//!   Bit `q` of the vector is bit `7 - (q % 8)` of byte `q / 8` (MSB first).
//! - Selection index (tag `0x03`):
//!   `index = be64(HMAC(key, 0x03 || be64(j))[0..8]) mod L`.
//!   The modulo bias is below 2^-44 for any practical list size.

use hmac::{Hmac, KeyInit, Mac};
use sha2::Sha256;

use crate::channel::Salt;
use crate::error::{Error, Result};

type HmacSha256 = Hmac<Sha256>;

/// Domain-separation tag for subkey derivation.
pub const TAG_SUBKEY: u8 = 0x01;
/// Domain-separation tag for label-vector expansion.
pub const TAG_LABEL: u8 = 0x02;
/// Domain-separation tag for key-selection indices.
pub const TAG_SELECT: u8 = 0x03;

pub(crate) fn hmac_sha256(key: &[u8], message: &[u8]) -> [u8; 32] {
    let mut mac = HmacSha256::new_from_slice(key).expect("hmac accepts any key length");
    mac.update(message);
    mac.finalize().into_bytes().into()
}

/// Derive the `index`-th subkey from a master key (indices start at 1).
pub fn derive_subkey(master_key: &[u8], index: u32) -> [u8; 32] {
    let mut msg = [0u8; 5];
    msg[0] = TAG_SUBKEY;
    msg[1..5].copy_from_slice(&index.to_be_bytes());
    hmac_sha256(master_key, &msg)
}

/// The PRF input at one generation step: the per-message salt plus the `c`
/// most recent token indices. Steps with fewer than `c` preceding covertext
/// tokens take the tail of the tokenized prompt, left-padded with the
/// termination index if still short; see [`cgram_window`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PrfContext {
    pub salt: Salt,
    pub cgram: Vec<u32>,
}

impl PrfContext {
    pub fn new(salt: Salt, cgram: Vec<u32>) -> Self {
        PrfContext { salt, cgram }
    }
}

/// Assemble the `c`-token window preceding generation step `step`
/// (0-based, counting covertext tokens only).
pub fn cgram_window(
    prompt_tokens: &[u32],
    covertext: &[u32],
    step: usize,
    c: usize,
    ter_index: u32,
) -> Vec<u32> {
    debug_assert!(step <= covertext.len());
    let mut window = Vec::with_capacity(c);
    let have = step.min(c);
    let borrow = c - have;
    if borrow > 0 {
        let from_prompt = borrow.min(prompt_tokens.len());
        for _ in 0..borrow - from_prompt {
            window.push(ter_index);
        }
        window.extend_from_slice(&prompt_tokens[prompt_tokens.len() - from_prompt..]);
    }
    window.extend_from_slice(&covertext[step - have..step]);
    window
}

/// An N-bit boost/suppress labelling of the vocabulary.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelVector {
    bytes: Vec<u8>,
    len: usize,
}

impl LabelVector {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Label of token `q`: true means boost.
    pub fn get(&self, q: usize) -> bool {
        debug_assert!(q < self.len);
        (self.bytes[q / 8] >> (7 - (q % 8))) & 1 == 1
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len).map(move |q| self.get(q))
    }

    pub fn count_ones(&self) -> usize {
        self.iter().filter(|&b| b).count()
    }

    /// Build a label vector from explicit per-token labels.
    pub fn from_bits(bits: &[bool]) -> Self {
        let mut bytes = vec![0u8; bits.len().div_ceil(8)];
        for (q, &b) in bits.iter().enumerate() {
            if b {
                bytes[q / 8] |= 1 << (7 - (q % 8));
            }
        }
        LabelVector {
            bytes,
            len: bits.len(),
        }
    }

    pub(crate) fn from_raw(mut bytes: Vec<u8>, len: usize) -> Self {
        assert!(bytes.len() * 8 >= len);
        bytes.truncate(len.div_ceil(8));
        if !len.is_multiple_of(8) {
            let mask = 0xffu8 << (8 - len % 8);
            *bytes.last_mut().unwrap() &= mask;
        }
        LabelVector { bytes, len }
    }
}

/// Expand an N-bit label vector for one generation step.
pub fn prf_label_vector(key: &[u8], ctx: &PrfContext, n: usize) -> LabelVector {
    assert!(n >= 1, "label vector length must be at least 1");
    let mut prefix = Vec::with_capacity(1 + 8 + 4 + 4 * ctx.cgram.len() + 4);
    prefix.push(TAG_LABEL);
    prefix.extend_from_slice(ctx.salt.as_bytes());
    prefix.extend_from_slice(&(ctx.cgram.len() as u32).to_be_bytes());
    for &tok in &ctx.cgram {
        prefix.extend_from_slice(&tok.to_be_bytes());
    }

    let n_bytes = n.div_ceil(8);
    let mut bytes = Vec::with_capacity(n_bytes);
    let mut counter: u32 = 0;
    while bytes.len() < n_bytes {
        let mut msg = prefix.clone();
        msg.extend_from_slice(&counter.to_be_bytes());
        bytes.extend_from_slice(&hmac_sha256(key, &msg));
        counter += 1;
    }
    bytes.truncate(n_bytes);
    // Zero any bits past n so equality on LabelVector is well defined.
    if !n.is_multiple_of(8) {
        let mask = 0xffu8 << (8 - n % 8);
        *bytes.last_mut().unwrap() &= mask;
    }
    LabelVector { bytes, len: n }
}

/// Deterministically select an index in `[0, list_size)` for position `j`.
pub fn prf_select_index(key: &[u8], position: u64, list_size: usize) -> Result<usize> {
    if list_size == 0 {
        return Err(Error::invalid("selection list must not be empty"));
    }
    let mut msg = [0u8; 9];
    msg[0] = TAG_SELECT;
    msg[1..9].copy_from_slice(&position.to_be_bytes());
    let mac = hmac_sha256(key, &msg);
    let value = u64::from_be_bytes(mac[..8].try_into().unwrap());
    Ok((value % list_size as u64) as usize)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::Salt;

    fn ctx(salt: u64, cgram: Vec<u32>) -> PrfContext {
        PrfContext::new(Salt(salt.to_be_bytes()), cgram)
    }

    #[test]
    fn label_vector_deterministic() {
        let key = [3u8; 32];
        let a = prf_label_vector(&key, &ctx(0, vec![1, 2, 3]), 64);
        let b = prf_label_vector(&key, &ctx(0, vec![1, 2, 3]), 64);
        assert_eq!(a, b);
    }

    #[test]
    fn label_vector_mean_close_to_half() {
        // 10k random contexts, fixed key: fraction of 1-bits in [0.49, 0.51].
        let key = [5u8; 32];
        let n = 64;
        let mut ones = 0usize;
        for trial in 0u32..10_000 {
            let window = vec![trial, trial.wrapping_mul(31), trial ^ 0xffff];
            let v = prf_label_vector(&key, &ctx(0, window), n);
            ones += v.count_ones();
        }
        let frac = ones as f64 / (10_000 * n) as f64;
        assert!((0.49..=0.51).contains(&frac), "fraction of ones {frac}");
    }

    #[test]
    fn salt_change_flips_about_half_the_bits() {
        let key = [8u8; 32];
        let n = 1024;
        let a = prf_label_vector(&key, &ctx(3, vec![10, 20, 30]), n);
        let b = prf_label_vector(&key, &ctx(4, vec![10, 20, 30]), n);
        let hamming: usize = a.iter().zip(b.iter()).filter(|(x, y)| x != y).count();
        // 4 sigma of Binomial(n, 1/2)
        let sigma = (n as f64 * 0.25).sqrt();
        let lo = (n as f64 / 2.0 - 4.0 * sigma) as usize;
        let hi = (n as f64 / 2.0 + 4.0 * sigma) as usize;
        assert!((lo..=hi).contains(&hamming), "hamming distance {hamming}");
    }

    #[test]
    fn distinct_keys_uncorrelated() {
        let a_key = [1u8; 32];
        let b_key = [2u8; 32];
        let n = 4096;
        let a = prf_label_vector(&a_key, &ctx(0, vec![7, 7, 7]), n);
        let b = prf_label_vector(&b_key, &ctx(0, vec![7, 7, 7]), n);
        let agree: usize = a.iter().zip(b.iter()).filter(|(x, y)| x == y).count();
        let sigma = (n as f64 * 0.25).sqrt();
        assert!(
            (agree as f64 - n as f64 / 2.0).abs() < 4.0 * sigma,
            "agreement {agree} of {n}"
        );
    }

    #[test]
    fn expansion_blocks_are_distinct() {
        // Counter-mode blocks for one context must never repeat.
        let key = [4u8; 32];
        let v = prf_label_vector(&key, &ctx(1, vec![0]), 2048);
        let blocks: Vec<&[u8]> = v.bytes.chunks(32).collect();
        for i in 0..blocks.len() {
            for j in i + 1..blocks.len() {
                assert_ne!(blocks[i], blocks[j], "blocks {i} and {j} repeat");
            }
        }
    }

    #[test]
    fn select_index_modulus_one() {
        let key = [0u8; 32];
        for j in 0..100 {
            assert_eq!(prf_select_index(&key, j, 1).unwrap(), 0);
        }
    }

    #[test]
    fn select_index_deterministic_and_validated() {
        let key = [6u8; 32];
        assert_eq!(
            prf_select_index(&key, 42, 5).unwrap(),
            prf_select_index(&key, 42, 5).unwrap()
        );
        assert!(prf_select_index(&key, 1, 0).is_err());
    }

    #[test]
    fn select_index_nearly_uniform() {
        let key = [7u8; 32];
        let mut counts = [0u64; 3];
        let trials = 30_000u64;
        for j in 1..=trials {
            counts[prf_select_index(&key, j, 3).unwrap()] += 1;
        }
        let expected = trials as f64 / 3.0;
        let sigma = (trials as f64 * (1.0 / 3.0) * (2.0 / 3.0)).sqrt();
        for (i, &c) in counts.iter().enumerate() {
            assert!(
                (c as f64 - expected).abs() < 4.0 * sigma,
                "index {i} count {c}"
            );
        }
    }

    #[test]
    fn cgram_window_padding_rule() {
        let prompt = vec![10, 11, 12];
        let cover = vec![20, 21, 22, 23];
        let ter = 99;
        // Step 0 with c=3: take the last 3 prompt tokens.
        assert_eq!(cgram_window(&prompt, &cover, 0, 3, ter), vec![10, 11, 12]);
        // Step 1: two prompt tokens plus the first covertext token.
        assert_eq!(cgram_window(&prompt, &cover, 1, 3, ter), vec![11, 12, 20]);
        // Deep enough: covertext only.
        assert_eq!(cgram_window(&prompt, &cover, 4, 3, ter), vec![21, 22, 23]);
        // Short prompt: left-pad with ter.
        assert_eq!(cgram_window(&[], &cover, 1, 3, ter), vec![99, 99, 20]);
        assert_eq!(cgram_window(&[7], &cover, 0, 3, ter), vec![99, 99, 7]);
    }

    #[test]
    fn label_vector_trailing_bits_zeroed() {
        let key = [9u8; 32];
        let v = prf_label_vector(&key, &ctx(0, vec![1]), 13);
        assert_eq!(v.len(), 13);
        // get() never panics on valid indices and equality is canonical.
        let again = prf_label_vector(&key, &ctx(0, vec![1]), 13);
        assert_eq!(v, again);
    }
}

//! Multi-key watermark codec.
//!
//! Encoding hides one message bit per watermarking key: at every generation
//! step a key is drawn (pseudorandomly, from the keys of the 1-bits), the
//! key's PRF labels every vocabulary entry boost or suppress, and the token
//! distribution is tilted toward boosted tokens before sampling. Decoding
//! replays the labelling for every key and counts how often the observed
//! token landed on the boosted side; a one-sided z-test per key recovers the
//! bits.
//!
//! Three perturbation modes are provided:
//!
//! - `MassLevel` (default): the boosted and suppressed label groups are
//!   treated as a two-outcome distribution, that pair is shifted by
//!   [`perturb`], and tokens are rescaled proportionally within their group.
//!   This tilts the sampled-label probability by about `delta` whenever the
//!   groups are reasonably balanced, independent of how flat the underlying
//!   distribution is. Requires `delta < 0.25` to act.
//! - `TokenLevel`: the band rule of [`perturb`] applied directly to the
//!   token distribution. Only tokens with probability in `[2delta, 1-2delta]`
//!   move, so on high-entropy channels (all entries tiny) this is a no-op;
//!   it is the right mode for peaked, low-entropy channels.
//! - `Sharp`: zeroes suppressed tokens outright. Trivially detectable;
//!   useful for debugging pipelines.

use serde::{Deserialize, Serialize};

use crate::channel::{
    derive_salt, ChannelHistory, CodecParams, HiddenMessage, SchemeKind, StegoDocument,
    WatermarkKeySet,
};
use crate::error::{Error, Result};
use crate::langmodel::{LanguageModel, TokenDistribution};
use crate::prf::{cgram_window, prf_label_vector, prf_select_index, LabelVector, PrfContext};
use crate::stats::inverse_normal_cdf;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// How the label vector is applied to the token distribution.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbMode {
    #[default]
    MassLevel,
    TokenLevel,
    Sharp,
}

/// Watermark codec parameters, shared by sender and receiver.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WatermarkParams {
    /// Perturbation strength, in (0, 1).
    pub delta: f64,
    /// PRF window size in tokens.
    pub c: usize,
    /// Covertext length in tokens.
    pub covertext_len: usize,
    /// Target probability that any message bit decodes wrongly.
    pub epsilon: f64,
    /// Message length in bits.
    pub n_bits: usize,
    /// Multiplier on the estimated covertext length.
    #[serde(default = "default_safety")]
    pub safety_factor: f64,
    #[serde(default)]
    pub perturb_mode: PerturbMode,
}

fn default_safety() -> f64 {
    1.0
}

impl WatermarkParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::invalid(format!(
                "delta must be in (0, 1), got {}",
                self.delta
            )));
        }
        if self.c == 0 {
            return Err(Error::invalid("c must be at least 1"));
        }
        if self.covertext_len == 0 {
            return Err(Error::invalid("covertext length must be at least 1"));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::invalid(format!(
                "epsilon must be in (0, 1), got {}",
                self.epsilon
            )));
        }
        if self.n_bits == 0 {
            return Err(Error::invalid("n_bits must be at least 1"));
        }
        if self.safety_factor < 1.0 {
            return Err(Error::invalid("safety_factor must be >= 1"));
        }
        Ok(())
    }

    /// The covertext length the estimator recommends for these parameters.
    pub fn recommended_length(&self) -> Result<usize> {
        required_length(self.n_bits, self.delta, self.epsilon, self.safety_factor)
    }

    /// The decision threshold used by the decoder.
    pub fn detection_threshold(&self) -> Result<f64> {
        detection_threshold(self.epsilon, self.n_bits)
    }
}

/// Per-bit counters, test statistics, and decisions from a decode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    /// Number of scored positions whose token carried label 1, per key.
    pub counters: Vec<u64>,
    /// counters / t_counted.
    pub fractions: Vec<f64>,
    /// 2 sqrt(t_counted) (fraction - 0.5).
    pub z_scores: Vec<f64>,
    /// One-sided decision threshold on the z-scores.
    pub threshold: f64,
    /// Equivalent threshold on the raw counters.
    pub count_threshold: f64,
    /// decision[i] = 1 iff z_scores[i] > threshold.
    pub decisions: Vec<u8>,
    /// Number of token positions scored (positions with a full window).
    pub t_counted: usize,
}

/// Probability that a sampled token carries label 1 under an active key,
/// as assumed by the length estimator: 2(1 + delta) / (4 + delta).
pub fn p_w(delta: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&delta) {
        return Err(Error::invalid(format!(
            "delta must be in [0, 1), got {delta}"
        )));
    }
    Ok(2.0 * (1.0 + delta) / (4.0 + delta))
}

/// z threshold for per-bit error rate epsilon/n.
pub fn detection_threshold(epsilon: f64, n_bits: usize) -> Result<f64> {
    if n_bits == 0 {
        return Err(Error::invalid("n_bits must be at least 1"));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::invalid("epsilon must be in (0, 1)"));
    }
    inverse_normal_cdf(1.0 - epsilon / n_bits as f64)
}

/// Minimum covertext length for decoding an n-bit message with overall
/// failure probability epsilon: ceil(z^2 n^2 / (4 (p_w - 0.5)^2)) scaled by
/// the safety factor.
pub fn required_length(n_bits: usize, delta: f64, epsilon: f64, safety_factor: f64) -> Result<usize> {
    if n_bits == 0 {
        return Err(Error::invalid("n_bits must be at least 1"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid("delta must be in (0, 1)"));
    }
    if safety_factor < 1.0 {
        return Err(Error::invalid("safety_factor must be >= 1"));
    }
    let z = detection_threshold(epsilon, n_bits)?;
    let shift = p_w(delta)? - 0.5;
    let base = (z * z * (n_bits * n_bits) as f64) / (4.0 * shift * shift);
    Ok((base.ceil() * safety_factor).ceil() as usize)
}

/// Tilt a distribution toward boosted tokens.
///
/// Only tokens whose probability lies in `[2delta, 1-2delta]` are eligible.
/// Eligible boosted tokens gain `delta`; eligible suppressed tokens lose
/// `delta' = min(delta * w / (|I| - w), 2delta)` where `w` counts boosted
/// eligible tokens. When every eligible token is on one side (`w = 0` or
/// `w = |I|`) the step is skipped. A final renormalization keeps the output
/// an exact probability vector even when the clamp bites.
pub fn perturb(dist: &TokenDistribution, labels: &LabelVector, delta: f64) -> TokenDistribution {
    assert_eq!(
        dist.len(),
        labels.len(),
        "label vector length must match the distribution"
    );
    assert!(delta > 0.0 && delta < 1.0, "delta must be in (0, 1)");

    let lo = 2.0 * delta;
    let hi = 1.0 - 2.0 * delta;
    let probs = dist.probs();

    let eligible: Vec<usize> = (0..probs.len())
        .filter(|&i| probs[i] >= lo && probs[i] <= hi)
        .collect();
    let boosted = eligible.iter().filter(|&&i| labels.get(i)).count();
    if boosted == 0 || boosted == eligible.len() {
        return dist.clone();
    }

    let suppressed = eligible.len() - boosted;
    let delta_down = (delta * boosted as f64 / suppressed as f64).min(2.0 * delta);

    let mut out = probs.to_vec();
    for &i in &eligible {
        if labels.get(i) {
            out[i] += delta;
        } else {
            out[i] -= delta_down;
        }
    }
    TokenDistribution::from_weights(out)
}

/// Mass-level application: shift the (boosted, suppressed) group masses with
/// [`perturb`] and rescale tokens proportionally within each group.
pub fn perturb_mass(dist: &TokenDistribution, labels: &LabelVector, delta: f64) -> TokenDistribution {
    assert_eq!(dist.len(), labels.len());
    let probs = dist.probs();
    let mass_boost: f64 = (0..probs.len())
        .filter(|&i| labels.get(i))
        .map(|i| probs[i])
        .sum();
    let mass_supp: f64 = 1.0 - mass_boost;

    let pair = TokenDistribution::from_weights(vec![mass_boost, mass_supp]);
    let shifted = perturb(&pair, &two_group_labels(), delta);
    let (new_boost, new_supp) = (shifted.probs()[0], shifted.probs()[1]);
    if (new_boost - mass_boost).abs() < f64::EPSILON {
        return dist.clone();
    }

    let scale_boost = new_boost / mass_boost;
    let scale_supp = new_supp / mass_supp;
    let out: Vec<f64> = (0..probs.len())
        .map(|i| {
            if labels.get(i) {
                probs[i] * scale_boost
            } else {
                probs[i] * scale_supp
            }
        })
        .collect();
    TokenDistribution::from_weights(out)
}

fn two_group_labels() -> LabelVector {
    // (boosted mass, suppressed mass) with the first entry labelled 1.
    LabelVector::from_raw(vec![0b1000_0000], 2)
}

/// Zero suppressed tokens and renormalize. Skipped when no boosted token
/// carries mass.
pub fn perturb_sharp(dist: &TokenDistribution, labels: &LabelVector) -> TokenDistribution {
    assert_eq!(dist.len(), labels.len());
    let probs = dist.probs();
    let boosted_mass: f64 = (0..probs.len())
        .filter(|&i| labels.get(i))
        .map(|i| probs[i])
        .sum();
    if boosted_mass < 1e-12 {
        return dist.clone();
    }
    let out: Vec<f64> = (0..probs.len())
        .map(|i| if labels.get(i) { probs[i] } else { 0.0 })
        .collect();
    TokenDistribution::from_weights(out)
}

/// Dispatch on the configured mode.
pub fn apply_perturb(
    mode: PerturbMode,
    dist: &TokenDistribution,
    labels: &LabelVector,
    delta: f64,
) -> TokenDistribution {
    match mode {
        PerturbMode::MassLevel => perturb_mass(dist, labels, delta),
        PerturbMode::TokenLevel => perturb(dist, labels, delta),
        PerturbMode::Sharp => perturb_sharp(dist, labels),
    }
}

/// Encode a message into covertext sampled from the model.
///
/// Emits exactly `params.covertext_len` tokens; the termination token is
/// conditioned away at every step so the document never ends early. When the
/// message is all zeros no key is ever active and the output is exactly an
/// unwatermarked sample for the same seed.
pub fn encode(
    keys: &WatermarkKeySet,
    message: &HiddenMessage,
    history: &ChannelHistory,
    model: &dyn LanguageModel,
    params: &WatermarkParams,
    rng_seed: u64,
) -> Result<StegoDocument> {
    params.validate()?;
    if message.len() != params.n_bits {
        return Err(Error::invalid(format!(
            "message has {} bits, params expect {}",
            message.len(),
            params.n_bits
        )));
    }
    if keys.n_bits() != params.n_bits {
        return Err(Error::invalid(format!(
            "key set has {} subkeys, params expect {}",
            keys.n_bits(),
            params.n_bits
        )));
    }

    let vocab = model.vocabulary();
    let n = vocab.size();
    let ter = vocab.ter_index();
    let salt = derive_salt(history);
    let active_keys: Vec<&[u8; 32]> = message
        .one_positions()
        .into_iter()
        .map(|i| &keys.subkeys()[i])
        .collect();

    let prompt_tokens = if history.prompt.is_empty() {
        Vec::new()
    } else {
        vocab.tokenize(&history.prompt)?
    };

    let mut rng = ChaCha20Rng::seed_from_u64(rng_seed);
    let mut tokens: Vec<u32> = Vec::with_capacity(params.covertext_len);
    for step in 0..params.covertext_len {
        let mut dist = model.next_distribution(&history.prompt, &tokens)?;
        if !active_keys.is_empty() {
            // Positions are 1-based in the selector input.
            let pick = prf_select_index(keys.master_key(), (step + 1) as u64, active_keys.len())?;
            let window = cgram_window(&prompt_tokens, &tokens, step, params.c, ter);
            let labels = prf_label_vector(active_keys[pick], &PrfContext::new(salt, window), n);
            dist = apply_perturb(params.perturb_mode, &dist, &labels, params.delta);
        }
        dist = dist.without_token(ter)?;
        tokens.push(dist.sample(&mut rng));
    }

    let text = vocab.render(&tokens)?;
    Ok(StegoDocument {
        scheme: SchemeKind::Watermark,
        token_indices: tokens,
        text,
        params: CodecParams::Watermark(params.clone()),
        history_digest: history.digest(),
    })
}

/// Decode a stego document (or any token sequence) against a key set.
pub fn decode(
    keys: &WatermarkKeySet,
    history: &ChannelHistory,
    stego: &StegoDocument,
    vocab: &crate::channel::Vocabulary,
    params: &WatermarkParams,
) -> Result<(HiddenMessage, DetectionReport)> {
    let tokens = if stego.token_indices.is_empty() {
        vocab.tokenize(&stego.text)?
    } else {
        stego.token_indices.clone()
    };
    decode_tokens(keys, history, &tokens, vocab.size(), params)
}

/// Core decode over raw token indices.
///
/// Only positions with a full window of genuine covertext tokens are scored
/// (the first `c` positions are skipped), so `t_counted = len - c`. A
/// document shorter than `c + 1` tokens scores nothing and decodes to all
/// zeros with `t_counted = 0`.
pub fn decode_tokens(
    keys: &WatermarkKeySet,
    history: &ChannelHistory,
    tokens: &[u32],
    vocab_size: usize,
    params: &WatermarkParams,
) -> Result<(HiddenMessage, DetectionReport)> {
    params.validate()?;
    if tokens.is_empty() {
        return Err(Error::DecodeFailed("stegotext is empty".into()));
    }
    if let Some(&bad) = tokens.iter().find(|&&t| t as usize >= vocab_size) {
        return Err(Error::DecodeFailed(format!(
            "token index {bad} out of range for vocabulary of size {vocab_size}"
        )));
    }
    if keys.n_bits() != params.n_bits {
        return Err(Error::invalid(format!(
            "key set has {} subkeys, params expect {}",
            keys.n_bits(),
            params.n_bits
        )));
    }

    let salt = derive_salt(history);
    let n_keys = keys.n_bits();
    let t_counted = tokens.len().saturating_sub(params.c);

    let mut counters = vec![0u64; n_keys];
    for pos in params.c..tokens.len() {
        let window = &tokens[pos - params.c..pos];
        let ctx = PrfContext::new(salt, window.to_vec());
        let sampled = tokens[pos] as usize;
        for (i, subkey) in keys.subkeys().iter().enumerate() {
            let labels = prf_label_vector(subkey, &ctx, vocab_size);
            if labels.get(sampled) {
                counters[i] += 1;
            }
        }
    }

    let threshold = params.detection_threshold()?;
    let (fractions, z_scores): (Vec<f64>, Vec<f64>) = if t_counted == 0 {
        (vec![0.5; n_keys], vec![0.0; n_keys])
    } else {
        let t = t_counted as f64;
        let fractions: Vec<f64> = counters.iter().map(|&c| c as f64 / t).collect();
        let z_scores = fractions
            .iter()
            .map(|&x| 2.0 * t.sqrt() * (x - 0.5))
            .collect();
        (fractions, z_scores)
    };
    let decisions: Vec<u8> = z_scores
        .iter()
        .map(|&z| u8::from(t_counted > 0 && z > threshold))
        .collect();
    let t = t_counted as f64;
    let count_threshold = t / 2.0 + threshold * t.sqrt() / 2.0;

    let message = HiddenMessage::from_bits(decisions.clone())?;
    Ok((
        message,
        DetectionReport {
            counters,
            fractions,
            z_scores,
            threshold,
            count_threshold,
            decisions,
            t_counted,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::Vocabulary;
    use crate::langmodel::SyntheticModel;
    use proptest::prelude::*;
    use rand::Rng;

    fn vocab_n(n: usize) -> Vocabulary {
        let mut tokens: Vec<String> = (0..n - 1).map(|i| format!("w{i}")).collect();
        tokens.push("</s>".to_string());
        Vocabulary::new(tokens, (n - 1) as u32).unwrap()
    }

    fn params(n_bits: usize, delta: f64, covertext_len: usize) -> WatermarkParams {
        WatermarkParams {
            delta,
            c: 3,
            covertext_len,
            epsilon: 0.05,
            n_bits,
            safety_factor: 1.0,
            perturb_mode: PerturbMode::MassLevel,
        }
    }

    #[test]
    fn p_w_values() {
        assert!((p_w(0.1).unwrap() - 2.2 / 4.1).abs() < 1e-12);
        assert!((p_w(0.1).unwrap() - 0.536_585).abs() < 1e-6);
        assert_eq!(p_w(0.0).unwrap(), 0.5);
        assert!((p_w(0.5).unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert!(p_w(1.0).is_err());
        assert!(p_w(-0.1).is_err());
    }

    #[test]
    fn perturb_worked_example() {
        let dist = TokenDistribution::new(vec![0.25, 0.25, 0.25, 0.25]).unwrap();
        let labels = LabelVector::from_bits(&[true, false, true, false]);
        let out = perturb(&dist, &labels, 0.1);
        let expected = [0.35, 0.15, 0.35, 0.15];
        for (got, want) in out.probs().iter().zip(expected) {
            assert!((got - want).abs() < 1e-12, "got {got}, want {want}");
        }
        let sum: f64 = out.probs().iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn perturb_skips_when_no_token_in_band() {
        let dist = TokenDistribution::new(vec![0.9, 0.05, 0.03, 0.02]).unwrap();
        let labels = LabelVector::from_bits(&[true, true, false, false]);
        let out = perturb(&dist, &labels, 0.2);
        assert_eq!(out.probs(), dist.probs());
    }

    #[test]
    fn perturb_all_ones_is_identity() {
        let dist = TokenDistribution::new(vec![0.25, 0.25, 0.25, 0.25]).unwrap();
        let labels = LabelVector::from_bits(&[true, true, true, true]);
        let out = perturb(&dist, &labels, 0.1);
        assert_eq!(out.probs(), dist.probs());
    }

    #[test]
    fn perturb_mass_shifts_flat_distributions() {
        // Flat over 64 tokens: token-level banding does nothing, the mass
        // rule moves delta of probability onto the boosted half.
        let n = 64;
        let dist = TokenDistribution::uniform(n);
        let bits: Vec<bool> = (0..n).map(|i| i % 2 == 0).collect();
        let labels = LabelVector::from_bits(&bits);
        let delta = 0.2;

        let token_level = perturb(&dist, &labels, delta);
        assert_eq!(token_level.probs(), dist.probs());

        let mass_level = perturb_mass(&dist, &labels, delta);
        let boosted: f64 = (0..n)
            .filter(|i| i % 2 == 0)
            .map(|i| mass_level.probs()[i])
            .sum();
        assert!((boosted - 0.7).abs() < 1e-9, "boosted mass {boosted}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(400))]
        #[test]
        fn perturb_outputs_are_distributions(
            raw in proptest::collection::vec(1e-6f64..1.0, 2..40),
            flags in proptest::collection::vec(proptest::bool::ANY, 40),
            delta in 0.01f64..0.99,
        ) {
            let n = raw.len();
            let dist = TokenDistribution::from_weights(raw);
            let labels = LabelVector::from_bits(&flags[..n]);
            for out in [
                perturb(&dist, &labels, delta),
                perturb_mass(&dist, &labels, delta),
                perturb_sharp(&dist, &labels),
            ] {
                let sum: f64 = out.probs().iter().sum();
                prop_assert!((sum - 1.0).abs() < 1e-9);
                prop_assert!(out.probs().iter().all(|&p| p >= 0.0));
            }
        }
    }

    #[test]
    fn perturb_handles_forced_edge_label_patterns() {
        // all-zero and all-one labels on an in-band distribution
        let dist = TokenDistribution::new(vec![0.25; 4]).unwrap();
        let all_zero = LabelVector::from_bits(&[false; 4]);
        let all_one = LabelVector::from_bits(&[true; 4]);
        for delta in [0.05, 0.1, 0.2] {
            for labels in [&all_zero, &all_one] {
                for out in [
                    perturb(&dist, labels, delta),
                    perturb_mass(&dist, labels, delta),
                ] {
                    let sum: f64 = out.probs().iter().sum();
                    assert!((sum - 1.0).abs() < 1e-9);
                    assert!(out.probs().iter().all(|&p| p >= 0.0));
                }
            }
        }
    }

    #[test]
    fn required_length_reference_points() {
        // n=3, delta=0.1, eps=0.05: about 7.6k tokens with the exact inverse
        // normal; the accepted band is [7000, 8500].
        let t = required_length(3, 0.1, 0.05, 1.0).unwrap();
        assert!((7000..=8500).contains(&t), "t = {t}");

        // n=1, delta=0.5, eps=0.05: ceil(1.645^2 / (4 * (1/6)^2)) = 25.
        assert_eq!(required_length(1, 0.5, 0.05, 1.0).unwrap(), 25);
    }

    #[test]
    fn required_length_monotone_in_epsilon() {
        let loose = required_length(3, 0.2, 0.1, 1.0).unwrap();
        let tight = required_length(3, 0.2, 0.01, 1.0).unwrap();
        assert!(tight > loose);
    }

    #[test]
    fn required_length_rejects_bad_arguments() {
        assert!(required_length(0, 0.1, 0.05, 1.0).is_err());
        assert!(required_length(3, 0.0, 0.05, 1.0).is_err());
        assert!(required_length(3, 1.0, 0.05, 1.0).is_err());
        assert!(required_length(3, 0.1, 0.0, 1.0).is_err());
        assert!(required_length(3, 0.1, 0.05, 0.5).is_err());
    }

    #[test]
    fn encode_is_deterministic() {
        let vocab = vocab_n(32);
        let model = SyntheticModel::new(vocab, 5, Some(5.0));
        let keys = WatermarkKeySet::derive(&[1u8; 32], 2).unwrap();
        let msg = HiddenMessage::parse("10").unwrap();
        let history = ChannelHistory::new("");
        let p = params(2, 0.2, 50);
        let a = encode(&keys, &msg, &history, &model, &p, 7).unwrap();
        let b = encode(&keys, &msg, &history, &model, &p, 7).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn all_zero_message_matches_unwatermarked_sampling() {
        let vocab = vocab_n(32);
        let model = SyntheticModel::new(vocab, 9, Some(5.0));
        let keys = WatermarkKeySet::derive(&[2u8; 32], 3).unwrap();
        let history = ChannelHistory::new("");
        let p = params(3, 0.2, 60);

        let zeros = HiddenMessage::from_bits(vec![0, 0, 0]).unwrap();
        let doc = encode(&keys, &zeros, &history, &model, &p, 11).unwrap();

        // Reference: the same sampling loop with no keys at all.
        let other_keys = WatermarkKeySet::derive(&[77u8; 32], 3).unwrap();
        let doc2 = encode(&other_keys, &zeros, &history, &model, &p, 11).unwrap();
        assert_eq!(doc.token_indices, doc2.token_indices);
    }

    #[test]
    fn single_bit_roundtrip_at_recommended_length() {
        let n_bits = 1;
        let delta = 0.2;
        let t = required_length(n_bits, delta, 0.05, 1.0).unwrap();
        let vocab = vocab_n(64);
        let model = SyntheticModel::new(vocab.clone(), 21, Some(6.0));
        let keys = WatermarkKeySet::derive(&[3u8; 32], n_bits).unwrap();
        let msg = HiddenMessage::parse("1").unwrap();
        let history = ChannelHistory::new("");
        let p = params(n_bits, delta, t);

        let mut ok = 0;
        let trials = 100;
        for seed in 0..trials {
            let doc = encode(&keys, &msg, &history, &model, &p, seed).unwrap();
            let (decoded, _) = decode(&keys, &history, &doc, &vocab, &p).unwrap();
            if decoded == msg {
                ok += 1;
            }
        }
        assert!(ok >= 95, "recovered {ok}/{trials}");
    }

    #[test]
    fn mean_shift_dominates_design_value_and_scales_with_keys() {
        // With one active key the per-step shift must be at least the
        // estimator's assumed p_w - 0.5; with two active keys the per-key
        // shift halves.
        let delta = 0.2;
        let t = 1200;
        let vocab = vocab_n(64);
        let model = SyntheticModel::new(vocab.clone(), 33, Some(6.0));
        let history = ChannelHistory::new("");

        let measure = |n_bits: usize, bits: &str, key_index: usize, trials: u64| -> f64 {
            let keys = WatermarkKeySet::derive(&[4u8; 32], n_bits).unwrap();
            let msg = HiddenMessage::parse(bits).unwrap();
            let p = params(n_bits, delta, t);
            let mut total = 0.0;
            for seed in 0..trials {
                let doc = encode(&keys, &msg, &history, &model, &p, 1000 + seed).unwrap();
                let (_, report) = decode(&keys, &history, &doc, &vocab, &p).unwrap();
                total += report.fractions[key_index];
            }
            total / trials as f64 - 0.5
        };

        let trials = 12;
        let shift_k1 = measure(1, "1", 0, trials);
        let design = p_w(delta).unwrap() - 0.5;
        assert!(
            shift_k1 >= design,
            "single-key shift {shift_k1} below design value {design}"
        );

        let shift_k2 = measure(2, "11", 0, trials);
        let ratio = shift_k2 / shift_k1;
        assert!(
            (ratio - 0.5).abs() < 0.15,
            "two-key shift ratio {ratio}, expected about 0.5"
        );
    }

    #[test]
    fn null_variance_matches_binomial_law() {
        // Unwatermarked text: Var(X_i) should be close to 0.25 / T.
        let vocab = vocab_n(64);
        let model = SyntheticModel::new(vocab.clone(), 55, Some(6.0));
        let keys = WatermarkKeySet::derive(&[5u8; 32], 1).unwrap();
        let history = ChannelHistory::new("");
        let t = 400;
        let p = params(1, 0.2, t);

        let mut fractions = Vec::new();
        for seed in 0..200u64 {
            let tokens = model.sample_tokens_no_ter(t, seed);
            let (_, report) = decode_tokens(&keys, &history, &tokens, 64, &p).unwrap();
            fractions.push(report.fractions[0]);
        }
        let mean: f64 = fractions.iter().sum::<f64>() / fractions.len() as f64;
        let var: f64 = fractions.iter().map(|x| (x - mean).powi(2)).sum::<f64>()
            / (fractions.len() - 1) as f64;
        let expected = 0.25 / report_t(t, p.c) as f64;
        assert!(
            (var - expected).abs() / expected < 0.2,
            "var {var}, expected {expected}"
        );
    }

    fn report_t(len: usize, c: usize) -> usize {
        len - c
    }

    impl SyntheticModel {
        /// Test helper: sample a fixed-length unwatermarked token sequence,
        /// never emitting the termination token.
        pub(crate) fn sample_tokens_no_ter(&self, len: usize, seed: u64) -> Vec<u32> {
            let ter = self.vocabulary().ter_index();
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let mut tokens = Vec::with_capacity(len);
            for _ in 0..len {
                let dist = self
                    .next_distribution("", &tokens)
                    .unwrap()
                    .without_token(ter)
                    .unwrap();
                tokens.push(dist.sample(&mut rng));
            }
            tokens
        }
    }

    #[test]
    fn short_stegotext_scores_nothing() {
        let keys = WatermarkKeySet::derive(&[6u8; 32], 2).unwrap();
        let history = ChannelHistory::new("");
        let p = params(2, 0.2, 10);
        let (msg, report) = decode_tokens(&keys, &history, &[1, 2], 32, &p).unwrap();
        assert_eq!(report.t_counted, 0);
        assert_eq!(msg.bits(), &[0, 0]);
        assert!(report.z_scores.iter().all(|&z| z == 0.0));
    }

    #[test]
    fn decode_rejects_empty_and_out_of_range() {
        let keys = WatermarkKeySet::derive(&[6u8; 32], 1).unwrap();
        let history = ChannelHistory::new("");
        let p = params(1, 0.2, 10);
        assert!(matches!(
            decode_tokens(&keys, &history, &[], 32, &p),
            Err(Error::DecodeFailed(_))
        ));
        assert!(matches!(
            decode_tokens(&keys, &history, &[40], 32, &p),
            Err(Error::DecodeFailed(_))
        ));
    }

    #[test]
    fn report_invariants_hold() {
        let vocab = vocab_n(32);
        let model = SyntheticModel::new(vocab.clone(), 2, Some(5.0));
        let keys = WatermarkKeySet::derive(&[8u8; 32], 3).unwrap();
        let msg = HiddenMessage::parse("101").unwrap();
        let history = ChannelHistory::new("");
        let p = params(3, 0.2, 80);
        let doc = encode(&keys, &msg, &history, &model, &p, 3).unwrap();
        let (_, report) = decode(&keys, &history, &doc, &vocab, &p).unwrap();
        let t = report.t_counted as f64;
        for i in 0..3 {
            let z = 2.0 * t.sqrt() * (report.fractions[i] - 0.5);
            assert!((z - report.z_scores[i]).abs() < 1e-9);
            assert_eq!(
                report.decisions[i],
                u8::from(report.z_scores[i] > report.threshold)
            );
        }
    }

    #[test]
    fn encoder_ignores_termination_token() {
        // Force heavy ter mass; output must still be exactly T long.
        let vocab = vocab_n(8);
        let model = SyntheticModel::new(vocab.clone(), 14, Some(1.0));
        let keys = WatermarkKeySet::derive(&[9u8; 32], 1).unwrap();
        let msg = HiddenMessage::parse("1").unwrap();
        let history = ChannelHistory::new("");
        let p = params(1, 0.2, 40);
        let doc = encode(&keys, &msg, &history, &model, &p, 4).unwrap();
        assert_eq!(doc.token_indices.len(), 40);
        assert!(doc.token_indices.iter().all(|&t| t != 7));
    }

    #[test]
    fn history_prompt_feeds_early_windows() {
        let vocab = vocab_n(16);
        let model = SyntheticModel::new(vocab.clone(), 3, Some(3.5));
        let keys = WatermarkKeySet::derive(&[10u8; 32], 1).unwrap();
        let msg = HiddenMessage::parse("1").unwrap();
        let p = params(1, 0.2, 30);
        let with_prompt = ChannelHistory::new("w1 w2 w3");
        let without = ChannelHistory::new("");
        let a = encode(&keys, &msg, &with_prompt, &model, &p, 6).unwrap();
        let b = encode(&keys, &msg, &without, &model, &p, 6).unwrap();
        assert_ne!(a.token_indices, b.token_indices);
    }

    #[test]
    fn proportional_sampling_sanity() {
        let dist = TokenDistribution::new(vec![0.7, 0.2, 0.1]).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        let mut counts = [0u32; 3];
        for _ in 0..30_000 {
            counts[dist.sample(&mut rng) as usize] += 1;
        }
        assert!((counts[0] as f64 / 30_000.0 - 0.7).abs() < 0.02);
        let _: f64 = rng.random();
    }
}

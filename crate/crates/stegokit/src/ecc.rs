//! Error-correcting codes protecting embedded bits from hash disagreement:
//! a repetition code with majority decoding and a rate-1/2 convolutional
//! code with hard-decision Viterbi decoding, plus byte/bit data encoders.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Code selection, shared through the codec profile.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EccSpec {
    #[default]
    None,
    Repetition {
        factor: usize,
    },
    Convolutional {
        constraint_length: usize,
        /// Generator polynomials as binary masks; bit `K-1` taps the current
        /// input, bit 0 the oldest register. The default pair (7, 5 octal)
        /// is the textbook K=3 code.
        generators: Vec<u64>,
        #[serde(default = "default_tail")]
        tail_termination: bool,
    },
}

fn default_tail() -> bool {
    true
}

impl EccSpec {
    /// The standard K=3, rate-1/2 code with generators 7 and 5 (octal).
    pub fn convolutional_default() -> Self {
        EccSpec::Convolutional {
            constraint_length: 3,
            generators: vec![0o7, 0o5],
            tail_termination: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            EccSpec::None => Ok(()),
            EccSpec::Repetition { factor } => {
                if *factor < 3 || factor % 2 == 0 {
                    return Err(Error::invalid(
                        "repetition factor must be an odd integer >= 3",
                    ));
                }
                Ok(())
            }
            EccSpec::Convolutional {
                constraint_length,
                generators,
                ..
            } => {
                if *constraint_length < 2 {
                    return Err(Error::invalid("constraint length must be at least 2"));
                }
                if generators.is_empty() {
                    return Err(Error::invalid("at least one generator polynomial required"));
                }
                let bound = 1u64 << constraint_length;
                if generators.iter().any(|&g| g == 0 || g >= bound) {
                    return Err(Error::invalid(format!(
                        "generators must be nonzero and below 2^{constraint_length}"
                    )));
                }
                Ok(())
            }
        }
    }

    /// Coded length for a given message length.
    pub fn encoded_len(&self, message_len: usize) -> Result<usize> {
        self.validate()?;
        Ok(match self {
            EccSpec::None => message_len,
            EccSpec::Repetition { factor } => message_len * factor,
            EccSpec::Convolutional {
                constraint_length,
                generators,
                tail_termination,
            } => {
                let steps = message_len + if *tail_termination { constraint_length - 1 } else { 0 };
                steps * generators.len()
            }
        })
    }
}

/// Encode a bit sequence.
pub fn ecc_encode(spec: &EccSpec, bits: &[u8]) -> Result<Vec<u8>> {
    spec.validate()?;
    if bits.is_empty() {
        return Err(Error::invalid("cannot encode an empty bit sequence"));
    }
    if bits.iter().any(|&b| b > 1) {
        return Err(Error::invalid("input bits must be 0 or 1"));
    }
    Ok(match spec {
        EccSpec::None => bits.to_vec(),
        EccSpec::Repetition { factor } => bits
            .iter()
            .flat_map(|&b| std::iter::repeat_n(b, *factor))
            .collect(),
        EccSpec::Convolutional {
            constraint_length,
            generators,
            tail_termination,
        } => {
            let k = *constraint_length;
            let mut state: u64 = 0; // the K-1 most recent inputs, newest in the high bit
            let mut out = Vec::with_capacity(spec.encoded_len(bits.len())?);
            let tail = if *tail_termination { k - 1 } else { 0 };
            let inputs = bits
                .iter()
                .copied()
                .chain(std::iter::repeat_n(0u8, tail));
            for b in inputs {
                let window = ((b as u64) << (k - 1)) | state;
                for &g in generators {
                    out.push(((window & g).count_ones() % 2) as u8);
                }
                state = window >> 1;
            }
            out
        }
    })
}

/// Decode a coded bit sequence. Repetition decodes by per-block majority;
/// convolutional by hard-decision Viterbi with ties broken toward the
/// lexicographically smaller path.
pub fn ecc_decode(spec: &EccSpec, bits: &[u8]) -> Result<Vec<u8>> {
    spec.validate()?;
    if bits.iter().any(|&b| b > 1) {
        return Err(Error::invalid("coded bits must be 0 or 1"));
    }
    match spec {
        EccSpec::None => Ok(bits.to_vec()),
        EccSpec::Repetition { factor } => {
            if bits.is_empty() || !bits.len().is_multiple_of(*factor) {
                return Err(Error::Framing(format!(
                    "coded length {} is not a positive multiple of {factor}",
                    bits.len()
                )));
            }
            Ok(bits
                .chunks(*factor)
                .map(|block| {
                    let ones: usize = block.iter().map(|&b| b as usize).sum();
                    u8::from(ones * 2 > *factor)
                })
                .collect())
        }
        EccSpec::Convolutional {
            constraint_length,
            generators,
            tail_termination,
        } => viterbi_decode(
            bits,
            *constraint_length,
            generators,
            *tail_termination,
        ),
    }
}

fn viterbi_decode(
    coded: &[u8],
    k: usize,
    generators: &[u64],
    tail_termination: bool,
) -> Result<Vec<u8>> {
    let n_out = generators.len();
    if coded.is_empty() || !coded.len().is_multiple_of(n_out) {
        return Err(Error::Framing(format!(
            "coded length {} is not a positive multiple of {n_out}",
            coded.len()
        )));
    }
    let steps = coded.len() / n_out;
    let tail = if tail_termination { k - 1 } else { 0 };
    if steps <= tail {
        return Err(Error::Framing(format!(
            "coded length {} too short for the tail", coded.len()
        )));
    }
    let message_len = steps - tail;
    let num_states = 1usize << (k - 1);

    const INF: u32 = u32::MAX / 2;
    let mut metric = vec![INF; num_states];
    let mut paths: Vec<Vec<u8>> = vec![Vec::new(); num_states];
    metric[0] = 0;

    for step in 0..steps {
        let observed = &coded[step * n_out..(step + 1) * n_out];
        let inputs: &[u8] = if step < message_len { &[0, 1] } else { &[0] };
        let mut next_metric = vec![INF; num_states];
        let mut next_paths: Vec<Vec<u8>> = vec![Vec::new(); num_states];

        for state in 0..num_states {
            if metric[state] == INF {
                continue;
            }
            for &b in inputs {
                let window = ((b as u64) << (k - 1)) | state as u64;
                let mut dist = 0u32;
                for (slot, &g) in generators.iter().enumerate() {
                    let expected = ((window & g).count_ones() % 2) as u8;
                    if expected != observed[slot] {
                        dist += 1;
                    }
                }
                let next_state = (window >> 1) as usize;
                let cand = metric[state] + dist;
                let better = match cand.cmp(&next_metric[next_state]) {
                    std::cmp::Ordering::Less => true,
                    std::cmp::Ordering::Greater => false,
                    std::cmp::Ordering::Equal => {
                        // Lexicographically smaller surviving path wins.
                        let mut challenger = paths[state].clone();
                        challenger.push(b);
                        challenger < next_paths[next_state]
                    }
                };
                if better {
                    let mut path = paths[state].clone();
                    path.push(b);
                    next_metric[next_state] = cand;
                    next_paths[next_state] = path;
                }
            }
        }
        metric = next_metric;
        paths = next_paths;
    }

    let best_state = if tail_termination {
        0
    } else {
        (0..num_states)
            .min_by_key(|&s| (metric[s], paths[s].clone()))
            .unwrap()
    };
    if metric[best_state] == INF {
        return Err(Error::Framing("no surviving decode path".into()));
    }
    let mut message = paths[best_state].clone();
    message.truncate(message_len);
    Ok(message)
}

/// UTF-8 bytes to a most-significant-bit-first bit sequence.
pub fn bytes_to_bits(data: &[u8]) -> Vec<u8> {
    data.iter()
        .flat_map(|&byte| (0..8).rev().map(move |shift| (byte >> shift) & 1))
        .collect()
}

/// Inverse of [`bytes_to_bits`].
pub fn bits_to_bytes(bits: &[u8]) -> Result<Vec<u8>> {
    if !bits.len().is_multiple_of(8) {
        return Err(Error::Framing(format!(
            "bit count {} is not a multiple of 8",
            bits.len()
        )));
    }
    Ok(bits
        .chunks(8)
        .map(|chunk| chunk.iter().fold(0u8, |acc, &b| (acc << 1) | b))
        .collect())
}

/// Frame a byte payload as bits: a 16-bit big-endian header holding the
/// payload bit count, then the payload bits. The header lets the receiving
/// side recover the message length after padding and error correction.
pub fn encode_payload(data: &[u8]) -> Result<Vec<u8>> {
    let bit_count = data.len() * 8;
    if bit_count > u16::MAX as usize {
        return Err(Error::invalid(format!(
            "payload of {bit_count} bits exceeds the 16-bit length header"
        )));
    }
    let mut out = bytes_to_bits(&(bit_count as u16).to_be_bytes());
    out.extend(bytes_to_bits(data));
    Ok(out)
}

/// Parse a framed payload, tolerating trailing padding bits.
pub fn decode_payload(bits: &[u8]) -> Result<Vec<u8>> {
    if bits.len() < 16 {
        return Err(Error::Framing("payload shorter than its length header".into()));
    }
    let header = bits[..16].iter().fold(0usize, |acc, &b| (acc << 1) | b as usize);
    if !header.is_multiple_of(8) {
        return Err(Error::Framing(format!(
            "header bit count {header} is not byte aligned"
        )));
    }
    if bits.len() < 16 + header {
        return Err(Error::Framing(format!(
            "payload truncated: header says {header} bits, {} available",
            bits.len() - 16
        )));
    }
    bits_to_bytes(&bits[16..16 + header])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn conv() -> EccSpec {
        EccSpec::convolutional_default()
    }

    /// Exhaustive nearest-codeword search with the same tie-break as the
    /// decoder: minimum Hamming distance, lexicographically smallest message.
    fn brute_force_decode(spec: &EccSpec, coded: &[u8], message_len: usize) -> Vec<u8> {
        let mut best: Option<(u32, Vec<u8>)> = None;
        for m in 0..(1u64 << message_len) {
            let bits: Vec<u8> = (0..message_len)
                .map(|i| ((m >> (message_len - 1 - i)) & 1) as u8)
                .collect();
            let candidate = ecc_encode(spec, &bits).unwrap();
            let dist = candidate
                .iter()
                .zip(coded)
                .filter(|(a, b)| a != b)
                .count() as u32;
            match &best {
                Some((d, m_best)) if *d < dist || (*d == dist && *m_best <= bits) => {}
                _ => best = Some((dist, bits)),
            }
        }
        best.unwrap().1
    }

    #[test]
    fn repetition_triples_bits() {
        let spec = EccSpec::Repetition { factor: 3 };
        assert_eq!(
            ecc_encode(&spec, &[1, 0]).unwrap(),
            vec![1, 1, 1, 0, 0, 0]
        );
    }

    #[test]
    fn repetition_majority_corrects_single_flip() {
        let spec = EccSpec::Repetition { factor: 3 };
        assert_eq!(ecc_decode(&spec, &[1, 1, 0, 0, 0, 0]).unwrap(), vec![1, 0]);
    }

    #[test]
    fn repetition_two_flips_in_a_block_break_that_bit_only() {
        let spec = EccSpec::Repetition { factor: 3 };
        let coded = ecc_encode(&spec, &[1, 0, 1]).unwrap();
        let mut tampered = coded.clone();
        tampered[0] ^= 1;
        tampered[1] ^= 1; // two flips in the first block
        let decoded = ecc_decode(&spec, &tampered).unwrap();
        assert_eq!(decoded, vec![0, 0, 1]);
    }

    #[test]
    fn repetition_radius_exhaustive_factor_three() {
        // Every pattern with at most one flip per block decodes correctly.
        let spec = EccSpec::Repetition { factor: 3 };
        let message = [1u8, 0, 1, 1, 0, 0, 1, 0];
        let coded = ecc_encode(&spec, &message).unwrap();
        let blocks = message.len();
        // Per block: no flip, or a flip in one of the three slots.
        let mut pattern = vec![0usize; blocks];
        loop {
            let mut tampered = coded.clone();
            for (block, &p) in pattern.iter().enumerate() {
                if p > 0 {
                    tampered[block * 3 + (p - 1)] ^= 1;
                }
            }
            assert_eq!(ecc_decode(&spec, &tampered).unwrap(), message.to_vec());
            // Advance the mixed-radix counter.
            let mut idx = 0;
            loop {
                if idx == blocks {
                    return;
                }
                pattern[idx] += 1;
                if pattern[idx] <= 3 {
                    break;
                }
                pattern[idx] = 0;
                idx += 1;
            }
        }
    }

    #[test]
    fn conv_single_one_with_zero_tail() {
        // Shift-register trace for input (1): outputs 11, 10, 11.
        assert_eq!(
            ecc_encode(&conv(), &[1]).unwrap(),
            vec![1, 1, 1, 0, 1, 1]
        );
    }

    #[test]
    fn conv_encoded_length_formula() {
        let spec = conv();
        for len in 1..20 {
            let bits = vec![1u8; len];
            assert_eq!(ecc_encode(&spec, &bits).unwrap().len(), (len + 2) * 2);
            assert_eq!(spec.encoded_len(len).unwrap(), (len + 2) * 2);
        }
    }

    #[test]
    fn conv_single_flip_always_corrected_16_bits() {
        let spec = conv();
        // A fixed 16-bit message; flip every coded position in turn.
        let message = [1u8, 0, 0, 1, 1, 1, 0, 1, 0, 0, 1, 0, 1, 1, 0, 0];
        let coded = ecc_encode(&spec, &message).unwrap();
        for flip in 0..coded.len() {
            let mut tampered = coded.clone();
            tampered[flip] ^= 1;
            let decoded = ecc_decode(&spec, &tampered).unwrap();
            assert_eq!(decoded, message.to_vec(), "flip at {flip} not corrected");
        }
    }

    #[test]
    fn viterbi_matches_brute_force_on_corruptions() {
        let spec = conv();
        let message = [0u8, 1, 1, 0, 1, 0, 0, 1];
        let coded = ecc_encode(&spec, &message).unwrap();
        // All single flips and a sweep of double flips.
        for i in 0..coded.len() {
            let mut t = coded.clone();
            t[i] ^= 1;
            assert_eq!(
                ecc_decode(&spec, &t).unwrap(),
                brute_force_decode(&spec, &t, message.len())
            );
        }
        for i in 0..coded.len() {
            for j in (i + 1..coded.len()).step_by(3) {
                let mut t = coded.clone();
                t[i] ^= 1;
                t[j] ^= 1;
                assert_eq!(
                    ecc_decode(&spec, &t).unwrap(),
                    brute_force_decode(&spec, &t, message.len()),
                    "flips at {i},{j}"
                );
            }
        }
    }

    #[test]
    fn none_is_identity() {
        let bits = [1u8, 0, 1];
        assert_eq!(ecc_encode(&EccSpec::None, &bits).unwrap(), bits.to_vec());
        assert_eq!(ecc_decode(&EccSpec::None, &bits).unwrap(), bits.to_vec());
    }

    #[test]
    fn bad_specs_rejected() {
        assert!(EccSpec::Repetition { factor: 2 }.validate().is_err());
        assert!(EccSpec::Repetition { factor: 1 }.validate().is_err());
        assert!(EccSpec::Convolutional {
            constraint_length: 3,
            generators: vec![],
            tail_termination: true
        }
        .validate()
        .is_err());
        assert!(EccSpec::Convolutional {
            constraint_length: 3,
            generators: vec![8],
            tail_termination: true
        }
        .validate()
        .is_err());
        assert!(ecc_encode(&EccSpec::None, &[]).is_err());
    }

    #[test]
    fn framing_errors_reported() {
        let spec = EccSpec::Repetition { factor: 3 };
        assert!(matches!(
            ecc_decode(&spec, &[1, 0]),
            Err(Error::Framing(_))
        ));
        assert!(matches!(
            ecc_decode(&conv(), &[1, 0, 1]),
            Err(Error::Framing(_))
        ));
    }

    proptest! {
        #[test]
        fn round_trip_all_specs(bits in proptest::collection::vec(0u8..2, 1..48)) {
            for spec in [
                EccSpec::None,
                EccSpec::Repetition { factor: 3 },
                EccSpec::Repetition { factor: 5 },
                conv(),
            ] {
                let coded = ecc_encode(&spec, &bits).unwrap();
                prop_assert_eq!(ecc_decode(&spec, &coded).unwrap(), bits.clone());
            }
        }

        #[test]
        fn payload_round_trip(data in proptest::collection::vec(any::<u8>(), 0..64)) {
            let bits = encode_payload(&data).unwrap();
            prop_assert_eq!(decode_payload(&bits).unwrap(), data.clone());
            // Padding after the payload is ignored.
            let mut padded = bits.clone();
            padded.extend_from_slice(&[0, 0, 0, 0, 0]);
            prop_assert_eq!(decode_payload(&padded).unwrap(), data);
        }
    }

    #[test]
    fn payload_errors() {
        assert!(decode_payload(&[1, 0, 1]).is_err());
        // Header larger than the available bits.
        let mut bits = bytes_to_bits(&(64u16).to_be_bytes());
        bits.extend_from_slice(&[0; 8]);
        assert!(decode_payload(&bits).is_err());
    }

    #[test]
    fn text_payload_survives_conv_coding() {
        let spec = conv();
        let payload = encode_payload("hi there".as_bytes()).unwrap();
        let coded = ecc_encode(&spec, &payload).unwrap();
        let decoded = ecc_decode(&spec, &coded).unwrap();
        let data = decode_payload(&decoded).unwrap();
        assert_eq!(String::from_utf8(data).unwrap(), "hi there");
    }
}

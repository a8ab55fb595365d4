//! Locality-sensitive hashes from embedding vectors to short bit strings.
//!
//! Variants:
//! - random hyperplane projection, with the hyperplanes derived from a
//!   shared key seed so both parties can reconstruct them;
//! - a PCA hash trained on domain embeddings, thresholding each principal
//!   component;
//! - an oracle with scripted or simulated behavior, for isolating codec
//!   logic from hash quality.

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::embed::embedder::EmbeddingVector;
use crate::error::{Error, Result};

/// Behavior of the oracle variant.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum OracleMode {
    /// Return the given bit strings in order, cycling at the end.
    Scripted {
        outputs: Vec<String>,
        #[serde(skip, default)]
        cursor: Arc<AtomicUsize>,
    },
    /// A keyed uniform hash of the input vector: every input maps to an
    /// independent-looking, stable value.
    Uniform { seed: u64 },
    /// As `Uniform`, but with probability `flip_prob` the output is XORed
    /// with a nonzero mask derived from `flip_seed`. Models per-chunk hash
    /// disagreement between sender and receiver.
    UniformWithFlips {
        seed: u64,
        flip_prob: f64,
        flip_seed: u64,
    },
}

/// A hash from embedding vectors to `hash_bits` bits.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LshModel {
    RandomProjection {
        hash_bits: usize,
        dimension: usize,
        /// Hex key seed the hyperplanes are derived from.
        #[serde(default)]
        seed: Option<String>,
        /// Row-major hyperplane matrix; populated on construction so the
        /// file round trip is bit exact even without the seed.
        #[serde(default)]
        hyperplanes: Vec<Vec<f64>>,
    },
    Pca {
        hash_bits: usize,
        dimension: usize,
        mean: Vec<f64>,
        components: Vec<Vec<f64>>,
        thresholds: Vec<f64>,
    },
    Oracle {
        hash_bits: usize,
        #[serde(flatten)]
        mode: OracleMode,
    },
}

impl LshModel {
    /// Random projection LSH with hyperplanes derived from a key seed.
    pub fn random_projection(hash_bits: usize, dimension: usize, key_seed: &[u8]) -> Result<Self> {
        if hash_bits == 0 || dimension == 0 {
            return Err(Error::invalid("hash_bits and dimension must be positive"));
        }
        let hyperplanes = derive_hyperplanes(hash_bits, dimension, key_seed);
        Ok(LshModel::RandomProjection {
            hash_bits,
            dimension,
            seed: Some(hex::encode(key_seed)),
            hyperplanes,
        })
    }

    /// Random projection LSH with explicit hyperplanes.
    pub fn random_projection_from_matrix(hyperplanes: Vec<Vec<f64>>) -> Result<Self> {
        if hyperplanes.is_empty() || hyperplanes[0].is_empty() {
            return Err(Error::invalid("hyperplane matrix must be nonempty"));
        }
        let dimension = hyperplanes[0].len();
        if hyperplanes.iter().any(|row| row.len() != dimension) {
            return Err(Error::invalid("hyperplane rows must share a dimension"));
        }
        Ok(LshModel::RandomProjection {
            hash_bits: hyperplanes.len(),
            dimension,
            seed: None,
            hyperplanes,
        })
    }

    pub fn oracle(hash_bits: usize, mode: OracleMode) -> Result<Self> {
        if hash_bits == 0 {
            return Err(Error::invalid("hash_bits must be positive"));
        }
        if let OracleMode::UniformWithFlips { flip_prob, .. } = &mode {
            if !(0.0..=1.0).contains(flip_prob) {
                return Err(Error::invalid("flip_prob must be in [0, 1]"));
            }
        }
        Ok(LshModel::Oracle { hash_bits, mode })
    }

    pub fn hash_bits(&self) -> usize {
        match self {
            LshModel::RandomProjection { hash_bits, .. }
            | LshModel::Pca { hash_bits, .. }
            | LshModel::Oracle { hash_bits, .. } => *hash_bits,
        }
    }

    pub fn dimension(&self) -> Option<usize> {
        match self {
            LshModel::RandomProjection { dimension, .. } | LshModel::Pca { dimension, .. } => {
                Some(*dimension)
            }
            LshModel::Oracle { .. } => None,
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut model: LshModel = serde_json::from_str(&text)?;
        // A seed-only file reconstructs its hyperplanes on load.
        if let LshModel::RandomProjection {
            hash_bits,
            dimension,
            seed: Some(seed_hex),
            hyperplanes,
        } = &mut model
        {
            if hyperplanes.is_empty() {
                let seed = hex::decode(seed_hex.as_str())
                    .map_err(|e| Error::invalid(format!("bad seed hex: {e}")))?;
                *hyperplanes = derive_hyperplanes(*hash_bits, *dimension, &seed);
            }
        }
        model.validate()?;
        Ok(model)
    }

    fn validate(&self) -> Result<()> {
        match self {
            LshModel::RandomProjection {
                hash_bits,
                dimension,
                hyperplanes,
                ..
            } => {
                if hyperplanes.len() != *hash_bits
                    || hyperplanes.iter().any(|r| r.len() != *dimension)
                {
                    return Err(Error::invalid("hyperplane matrix shape mismatch"));
                }
            }
            LshModel::Pca {
                hash_bits,
                dimension,
                mean,
                components,
                thresholds,
            } => {
                if components.len() != *hash_bits
                    || thresholds.len() != *hash_bits
                    || mean.len() != *dimension
                    || components.iter().any(|c| c.len() != *dimension)
                {
                    return Err(Error::invalid("pca model shape mismatch"));
                }
            }
            LshModel::Oracle { .. } => {}
        }
        Ok(())
    }
}

fn derive_hyperplanes(hash_bits: usize, dimension: usize, key_seed: &[u8]) -> Vec<Vec<f64>> {
    let mut hasher = Sha256::new();
    hasher.update([0x20u8]);
    hasher.update(key_seed);
    let mut rng = ChaCha20Rng::from_seed(hasher.finalize().into());
    (0..hash_bits)
        .map(|_| {
            (0..dimension)
                .map(|_| StandardNormal.sample(&mut rng))
                .collect()
        })
        .collect()
}

fn bits_from_string(s: &str) -> Result<Vec<u8>> {
    s.chars()
        .map(|ch| match ch {
            '0' => Ok(0),
            '1' => Ok(1),
            other => Err(Error::invalid(format!("invalid oracle bit {other:?}"))),
        })
        .collect()
}

/// Hash an embedding vector to `hash_bits` bits.
pub fn lsh_hash(model: &LshModel, v: &EmbeddingVector) -> Result<Vec<u8>> {
    match model {
        LshModel::RandomProjection {
            dimension,
            hyperplanes,
            ..
        } => {
            if v.dim() != *dimension {
                return Err(Error::invalid(format!(
                    "vector dimension {} does not match model dimension {dimension}",
                    v.dim()
                )));
            }
            Ok(hyperplanes
                .iter()
                .map(|plane| {
                    let dot: f64 = plane.iter().zip(&v.values).map(|(a, b)| a * b).sum();
                    u8::from(dot >= 0.0)
                })
                .collect())
        }
        LshModel::Pca {
            dimension,
            mean,
            components,
            thresholds,
            ..
        } => {
            if v.dim() != *dimension {
                return Err(Error::invalid(format!(
                    "vector dimension {} does not match model dimension {dimension}",
                    v.dim()
                )));
            }
            let centered: Vec<f64> = v.values.iter().zip(mean).map(|(a, m)| a - m).collect();
            Ok(components
                .iter()
                .zip(thresholds)
                .map(|(comp, th)| {
                    let score: f64 = comp.iter().zip(&centered).map(|(a, b)| a * b).sum();
                    u8::from(score >= *th)
                })
                .collect())
        }
        LshModel::Oracle { hash_bits, mode } => oracle_hash(*hash_bits, mode, v),
    }
}

fn oracle_hash(hash_bits: usize, mode: &OracleMode, v: &EmbeddingVector) -> Result<Vec<u8>> {
    match mode {
        OracleMode::Scripted { outputs, cursor } => {
            if outputs.is_empty() {
                return Err(Error::invalid("scripted oracle has no outputs"));
            }
            let idx = cursor.fetch_add(1, Ordering::Relaxed) % outputs.len();
            let bits = bits_from_string(&outputs[idx])?;
            if bits.len() != hash_bits {
                return Err(Error::invalid(format!(
                    "scripted output {idx} has {} bits, expected {hash_bits}",
                    bits.len()
                )));
            }
            Ok(bits)
        }
        OracleMode::Uniform { seed } => Ok(keyed_bits(*seed, 0x21, v, hash_bits)),
        OracleMode::UniformWithFlips {
            seed,
            flip_prob,
            flip_seed,
        } => {
            let mut bits = keyed_bits(*seed, 0x21, v, hash_bits);
            // Flip decision and mask are functions of the input, so the
            // oracle stays deterministic per text.
            let roll = keyed_bits(*flip_seed, 0x22, v, 64);
            let unit: f64 = roll
                .iter()
                .enumerate()
                .map(|(i, &b)| (b as f64) / 2f64.powi(i as i32 + 1))
                .sum();
            if unit < *flip_prob {
                let mask = keyed_bits(*flip_seed, 0x23, v, hash_bits);
                let mut flipped = false;
                for (b, m) in bits.iter_mut().zip(&mask) {
                    *b ^= m;
                    flipped |= *m == 1;
                }
                if !flipped {
                    // All-zero mask would hide the injected failure.
                    bits[0] ^= 1;
                }
            }
            Ok(bits)
        }
    }
}

fn keyed_bits(seed: u64, tag: u8, v: &EmbeddingVector, count: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(count);
    let mut block: u32 = 0;
    while out.len() < count {
        let mut hasher = Sha256::new();
        hasher.update([tag]);
        hasher.update(seed.to_be_bytes());
        hasher.update(block.to_be_bytes());
        hasher.update(v.le_bytes());
        let digest = hasher.finalize();
        for byte in digest {
            for shift in (0..8).rev() {
                if out.len() == count {
                    break;
                }
                out.push((byte >> shift) & 1);
            }
        }
        block += 1;
    }
    out
}

/// How PCA thresholds are chosen.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdRule {
    /// Zero after mean-centering.
    #[default]
    Zero,
    /// Per-component median of the training projections.
    Median,
}

/// Train a PCA hash: the top `hash_bits` principal directions of the corpus,
/// thresholded per `rule`.
pub fn train_pca_lsh(
    corpus: &[EmbeddingVector],
    hash_bits: usize,
    rule: ThresholdRule,
) -> Result<LshModel> {
    if hash_bits == 0 {
        return Err(Error::invalid("hash_bits must be positive"));
    }
    if corpus.len() < hash_bits + 1 {
        return Err(Error::invalid(format!(
            "need at least {} training vectors, got {}",
            hash_bits + 1,
            corpus.len()
        )));
    }
    let dim = corpus[0].dim();
    if dim < hash_bits {
        return Err(Error::invalid(format!(
            "dimension {dim} is smaller than hash_bits {hash_bits}"
        )));
    }
    if corpus.iter().any(|v| v.dim() != dim) {
        return Err(Error::invalid("training vectors must share a dimension"));
    }

    let m = corpus.len();
    let mut mean = vec![0.0f64; dim];
    for v in corpus {
        for (acc, x) in mean.iter_mut().zip(&v.values) {
            *acc += x;
        }
    }
    for acc in &mut mean {
        *acc /= m as f64;
    }

    let centered = DMatrix::from_fn(m, dim, |r, c| corpus[r].values[c] - mean[c]);
    let covariance = (centered.transpose() * &centered) / (m as f64 - 1.0);
    let eigen = covariance.symmetric_eigen();

    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| {
        eigen.eigenvalues[b]
            .partial_cmp(&eigen.eigenvalues[a])
            .unwrap()
    });

    let total_variance: f64 = eigen.eigenvalues.iter().sum();
    if total_variance < 1e-12 {
        return Err(Error::invalid(
            "training corpus has zero variance; cannot train a PCA hash",
        ));
    }

    let mut components = Vec::with_capacity(hash_bits);
    for &col in order.iter().take(hash_bits) {
        if eigen.eigenvalues[col] < 1e-12 {
            return Err(Error::invalid(
                "fewer informative directions than requested hash bits",
            ));
        }
        let mut comp: DVector<f64> = eigen.eigenvectors.column(col).into();
        // Canonical sign: largest-magnitude entry positive.
        let lead = comp
            .iter()
            .cloned()
            .enumerate()
            .max_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).unwrap())
            .map(|(i, _)| i)
            .unwrap_or(0);
        if comp[lead] < 0.0 {
            comp = -comp;
        }
        components.push(comp.iter().cloned().collect::<Vec<f64>>());
    }

    let thresholds: Vec<f64> = match rule {
        ThresholdRule::Zero => vec![0.0; hash_bits],
        ThresholdRule::Median => components
            .iter()
            .map(|comp| {
                let mut scores: Vec<f64> = corpus
                    .iter()
                    .map(|v| {
                        comp.iter()
                            .zip(v.values.iter().zip(&mean))
                            .map(|(c, (x, mu))| c * (x - mu))
                            .sum()
                    })
                    .collect();
                scores.sort_by(|a, b| a.partial_cmp(b).unwrap());
                let mid = scores.len() / 2;
                if scores.len().is_multiple_of(2) {
                    0.5 * (scores[mid - 1] + scores[mid])
                } else {
                    scores[mid]
                }
            })
            .collect(),
    };

    Ok(LshModel::Pca {
        hash_bits,
        dimension: dim,
        mean,
        components,
        thresholds,
    })
}

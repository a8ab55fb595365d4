//! The codec profile: one JSON file bundling every decision sender and
//! receiver must share: scheme, parameters, error correction, model spec,
//! vocabulary, and LSH model path.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::channel::{SchemeKind, Vocabulary};
use crate::embed::codec::EmbedParams;
use crate::embed::lsh::LshModel;
use crate::error::{Error, Result};
use crate::langmodel::{LanguageModel, ModelSpec};
use crate::watermark::WatermarkParams;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    pub scheme: SchemeKind,
    /// Vocabulary file: one token per line, 0-based line number is the index.
    pub vocabulary: PathBuf,
    pub ter_index: u32,
    #[serde(default)]
    pub unknown_index: Option<u32>,
    pub model: ModelSpec,
    #[serde(default)]
    pub watermark: Option<WatermarkParams>,
    #[serde(default)]
    pub embedding: Option<EmbedParams>,
    /// LSH model file for the embedding scheme.
    #[serde(default)]
    pub lsh_model: Option<PathBuf>,
    /// Key size in bits for key files referenced alongside this profile.
    #[serde(default = "default_key_bits")]
    pub key_bits: usize,
}

fn default_key_bits() -> usize {
    crate::channel::DEFAULT_KEY_BITS
}

impl Profile {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::invalid(format!("cannot read profile {}: {e}", path.display())))?;
        let profile: Profile = serde_json::from_str(&text)?;
        profile.validate()?;
        Ok(profile)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        match self.scheme {
            SchemeKind::Watermark => {
                let params = self
                    .watermark
                    .as_ref()
                    .ok_or_else(|| Error::invalid("watermark profile lacks watermark params"))?;
                params.validate()
            }
            SchemeKind::Embedding => {
                let params = self
                    .embedding
                    .as_ref()
                    .ok_or_else(|| Error::invalid("embedding profile lacks embedding params"))?;
                params.validate()
            }
        }
    }

    /// Load the vocabulary this profile points at. Relative paths resolve
    /// against `base` (normally the profile file's directory).
    pub fn load_vocabulary(&self, base: Option<&Path>) -> Result<Vocabulary> {
        let path = resolve(base, &self.vocabulary);
        let vocab = Vocabulary::from_file(&path, self.ter_index)?;
        match self.unknown_index {
            Some(idx) => vocab.with_unknown(idx),
            None => Ok(vocab),
        }
    }

    pub fn build_model(&self, base: Option<&Path>) -> Result<Box<dyn LanguageModel>> {
        let vocab = self.load_vocabulary(base)?;
        let spec = match &self.model {
            ModelSpec::Ngram {
                corpus,
                order,
                smoothing,
            } => ModelSpec::Ngram {
                corpus: resolve(base, corpus),
                order: *order,
                smoothing: *smoothing,
            },
            other => other.clone(),
        };
        spec.build(vocab)
    }

    pub fn load_lsh(&self, base: Option<&Path>) -> Result<LshModel> {
        let path = self
            .lsh_model
            .as_ref()
            .ok_or_else(|| Error::invalid("profile has no lsh_model path"))?;
        LshModel::load(resolve(base, path))
    }
}

fn resolve(base: Option<&Path>, path: &Path) -> PathBuf {
    match base {
        Some(dir) if path.is_relative() => dir.join(path),
        _ => path.to_path_buf(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::watermark::PerturbMode;

    fn watermark_profile(dir: &Path) -> Profile {
        let vocab_path = dir.join("vocab.txt");
        std::fs::write(&vocab_path, "a\nb\nc\n</s>\n").unwrap();
        Profile {
            scheme: SchemeKind::Watermark,
            vocabulary: vocab_path,
            ter_index: 3,
            unknown_index: None,
            model: ModelSpec::Synthetic {
                seed: 1,
                entropy_target: Some(2.0),
            },
            watermark: Some(WatermarkParams {
                delta: 0.2,
                c: 3,
                covertext_len: 100,
                epsilon: 0.05,
                n_bits: 3,
                safety_factor: 1.0,
                perturb_mode: PerturbMode::MassLevel,
            }),
            embedding: None,
            lsh_model: None,
            key_bits: 256,
        }
    }

    #[test]
    fn profile_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let profile = watermark_profile(dir.path());
        let path = dir.path().join("profile.json");
        profile.save(&path).unwrap();
        let loaded = Profile::load(&path).unwrap();
        assert_eq!(profile, loaded);
        let model = loaded.build_model(None).unwrap();
        assert_eq!(model.vocabulary().size(), 4);
    }

    #[test]
    fn scheme_params_must_match() {
        let dir = tempfile::tempdir().unwrap();
        let mut profile = watermark_profile(dir.path());
        profile.watermark = None;
        assert!(profile.validate().is_err());
    }
}

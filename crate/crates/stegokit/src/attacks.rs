//! Tampering simulator and the executable forms of both robustness
//! measures: n-gram shuffling, synonym substitution, and rule-based
//! paraphrasing, plus the local-consistency checker and embedding drift.
//!
//! Every attack is a pure function of (input, config): a fixed seed gives a
//! fixed output. Local mode confines edits to single sentences; sentences
//! are split on '.', '!' or '?' followed by whitespace. Blank-line-separated
//! paragraphs are attacked independently and the blank lines are kept, so
//! tampering never merges passages that were separate.

use std::collections::{BTreeMap, HashSet};
use std::hash::Hash;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::embed::embedder::{embed_text, Embedder};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    NgramShuffle,
    Synonym,
    Paraphrase,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackMode {
    Local,
    #[default]
    Global,
}

/// How the paraphrase attack rewrites text: the fixed rule table, or an
/// external model behind an OpenAI-compatible chat endpoint.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "engine", rename_all = "snake_case")]
pub enum Paraphraser {
    #[default]
    DeterministicRules,
    Remote {
        endpoint: String,
        model: String,
        #[serde(default = "default_auth_env")]
        auth_env: String,
    },
}

fn default_auth_env() -> String {
    "STEGOKIT_API_KEY".to_string()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    pub kind: AttackKind,
    #[serde(default)]
    pub mode: AttackMode,
    /// Fraction of units (n-grams, covered words, sentences) to tamper.
    pub fraction: f64,
    /// n-gram size for the shuffle attack.
    #[serde(default = "default_ngram")]
    pub ngram: usize,
    #[serde(default)]
    pub lexicon: Option<PathBuf>,
    #[serde(default)]
    pub paraphraser: Paraphraser,
    #[serde(default)]
    pub seed: u64,
}

fn default_ngram() -> usize {
    3
}

impl AttackConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.fraction) {
            return Err(Error::invalid(format!(
                "fraction must be in [0, 1], got {}",
                self.fraction
            )));
        }
        if self.ngram == 0 {
            return Err(Error::invalid("ngram size must be at least 1"));
        }
        Ok(())
    }
}

/// Apply the configured attack.
pub fn apply_attack(text: &str, config: &AttackConfig) -> Result<String> {
    config.validate()?;
    match config.kind {
        AttackKind::NgramShuffle => Ok(ngram_shuffle(text, config)),
        AttackKind::Synonym => {
            let path = config
                .lexicon
                .as_ref()
                .ok_or_else(|| Error::invalid("synonym attack requires a lexicon path"))?;
            let lexicon = SynonymLexicon::from_file(path)?;
            Ok(synonym_substitute(text, &lexicon, config))
        }
        AttackKind::Paraphrase => paraphrase(text, config),
    }
}

/// Apply a rewrite to each blank-line-separated paragraph, preserving the
/// paragraph breaks themselves.
fn per_paragraph(text: &str, mut rewrite: impl FnMut(&str) -> String) -> String {
    if !text.contains("\n\n") {
        return rewrite(text);
    }
    text.split("\n\n")
        .map(|p| {
            if p.trim().is_empty() {
                p.to_string()
            } else {
                rewrite(p)
            }
        })
        .collect::<Vec<String>>()
        .join("\n\n")
}

fn split_sentences(text: &str) -> Vec<String> {
    let mut sentences = Vec::new();
    let mut current = String::new();
    let mut chars = text.chars().peekable();
    while let Some(ch) = chars.next() {
        current.push(ch);
        if matches!(ch, '.' | '!' | '?') {
            let at_boundary = chars.peek().is_none_or(|next| next.is_whitespace());
            if at_boundary {
                while chars.peek().is_some_and(|c| c.is_whitespace()) {
                    chars.next();
                }
                sentences.push(std::mem::take(&mut current));
            }
        }
    }
    if !current.trim().is_empty() {
        sentences.push(current);
    }
    sentences
}

/// Shuffle a seeded subset of the text's word n-grams. Global mode permutes
/// blocks across the whole text; local mode permutes within each sentence.
pub fn ngram_shuffle(text: &str, config: &AttackConfig) -> String {
    if config.fraction == 0.0 {
        return text.to_string();
    }
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    per_paragraph(text, |paragraph| match config.mode {
        AttackMode::Global => shuffle_words(paragraph, config, &mut rng),
        AttackMode::Local => {
            let shuffled: Vec<String> = split_sentences(paragraph)
                .iter()
                .map(|sentence| shuffle_words(sentence, config, &mut rng))
                .collect();
            shuffled.join(" ")
        }
    })
}

fn shuffle_words(text: &str, config: &AttackConfig, rng: &mut ChaCha20Rng) -> String {
    let words: Vec<&str> = text.split_whitespace().collect();
    if words.is_empty() {
        return text.trim().to_string();
    }
    let blocks: Vec<&[&str]> = words.chunks(config.ngram).collect();
    let selected = pick_indices(blocks.len(), config.fraction, rng);
    if selected.len() < 2 {
        return words.join(" ");
    }
    let mut contents: Vec<&[&str]> = selected.iter().map(|&i| blocks[i]).collect();
    contents.shuffle(rng);
    let mut rearranged: Vec<&[&str]> = blocks.clone();
    for (slot, block) in selected.iter().zip(contents) {
        rearranged[*slot] = block;
    }
    rearranged
        .iter()
        .flat_map(|block| block.iter())
        .copied()
        .collect::<Vec<&str>>()
        .join(" ")
}

/// Choose round(fraction * count) distinct indices, in ascending order.
fn pick_indices(count: usize, fraction: f64, rng: &mut ChaCha20Rng) -> Vec<usize> {
    let take = ((count as f64) * fraction).round() as usize;
    let take = take.min(count);
    if take == 0 {
        return Vec::new();
    }
    let mut all: Vec<usize> = (0..count).collect();
    all.shuffle(rng);
    let mut chosen: Vec<usize> = all.into_iter().take(take).collect();
    chosen.sort_unstable();
    chosen
}

/// Synonym table: one entry per line, `word: syn1, syn2`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SynonymLexicon {
    map: BTreeMap<String, Vec<String>>,
}

impl SynonymLexicon {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::invalid(format!("cannot read lexicon {}: {e}", path.display()))
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (word, rest) = line.split_once(':').ok_or_else(|| {
                Error::invalid(format!("lexicon line {} lacks a colon", lineno + 1))
            })?;
            let synonyms: Vec<String> = rest
                .split(',')
                .map(|s| s.trim().to_string())
                .filter(|s| !s.is_empty())
                .collect();
            if synonyms.is_empty() {
                return Err(Error::invalid(format!(
                    "lexicon entry {:?} has no synonyms",
                    word.trim()
                )));
            }
            map.insert(word.trim().to_lowercase(), synonyms);
        }
        Ok(SynonymLexicon { map })
    }

    pub fn synonyms(&self, word: &str) -> Option<&[String]> {
        self.map.get(&word.to_lowercase()).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

/// Replace a seeded subset of lexicon-covered words with synonyms.
/// Punctuation attached to a word and leading capitalization survive the
/// substitution.
pub fn synonym_substitute(text: &str, lexicon: &SynonymLexicon, config: &AttackConfig) -> String {
    if config.fraction == 0.0 {
        return text.to_string();
    }
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    per_paragraph(text, |paragraph| {
        substitute_words(paragraph, lexicon, config, &mut rng)
    })
}

fn substitute_words(
    text: &str,
    lexicon: &SynonymLexicon,
    config: &AttackConfig,
    rng: &mut ChaCha20Rng,
) -> String {
    let mut words: Vec<String> = text.split_whitespace().map(String::from).collect();
    let covered: Vec<usize> = words
        .iter()
        .enumerate()
        .filter_map(|(i, w)| {
            let core = w.trim_matches(|ch: char| !ch.is_alphanumeric() && ch != '\'');
            (!core.is_empty() && lexicon.synonyms(core).is_some()).then_some(i)
        })
        .collect();
    let span = covered.len();
    let picks = pick_indices(span, config.fraction, rng);
    for pick in picks {
        let idx = covered[pick];
        let original = words[idx].clone();
        let core_start = original
            .find(|ch: char| ch.is_alphanumeric() || ch == '\'')
            .unwrap_or(0);
        let core_end = original
            .rfind(|ch: char| ch.is_alphanumeric() || ch == '\'')
            .map_or(original.len(), |p| p + original[p..].chars().next().unwrap().len_utf8());
        let (prefix, rest) = original.split_at(core_start);
        let (core, suffix) = rest.split_at(core_end - core_start);
        let options = lexicon.synonyms(core).expect("index was covered");
        let choice = &options[rng.random_range(0..options.len())];
        let replacement = match core.chars().next() {
            Some(first) if first.is_uppercase() => {
                let mut chars = choice.chars();
                match chars.next() {
                    Some(c) => c.to_uppercase().collect::<String>() + chars.as_str(),
                    None => choice.clone(),
                }
            }
            _ => choice.clone(),
        };
        words[idx] = format!("{prefix}{replacement}{suffix}");
    }
    words.join(" ")
}

/// The fixed rewrite table for rule-based paraphrasing: contraction merges
/// and expansions, applied verbatim.
const PHRASE_RULES: &[(&str, &str)] = &[
    ("can not", "cannot"),
    ("do not", "don't"),
    ("does not", "doesn't"),
    ("did not", "didn't"),
    ("is not", "isn't"),
    ("it is", "it's"),
    ("you are", "you're"),
    ("we are", "we're"),
    ("they are", "they're"),
    ("will not", "won't"),
    ("i am", "I'm"),
];

fn clause_swap_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^(.+?), (and|but|because) (.+?)([.!?]?)$").unwrap())
}

fn passive_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\b(\w+) was (\w+) by (\w+)\b").unwrap())
}

fn rewrite_sentence(sentence: &str) -> String {
    let mut out = sentence.to_string();
    for (from, to) in PHRASE_RULES {
        out = out.replace(from, to);
    }
    out = passive_regex().replace_all(&out, "$3 $2 $1").into_owned();
    if let Some(caps) = clause_swap_regex().captures(&out.clone()) {
        out = format!(
            "{}, {} {}{}",
            caps.get(3).unwrap().as_str(),
            caps.get(2).unwrap().as_str(),
            caps.get(1).unwrap().as_str(),
            caps.get(4).unwrap().as_str()
        );
    }
    out
}

/// Rewrite a seeded subset of sentences. The deterministic engine applies
/// the fixed rule table; the remote engine ships each selected sentence to
/// an external model. The test harness and acceptance runs use only the
/// deterministic form.
pub fn paraphrase(text: &str, config: &AttackConfig) -> Result<String> {
    if config.fraction == 0.0 {
        return Ok(text.to_string());
    }
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    let mut failure = None;
    let rewritten = per_paragraph(text, |paragraph| {
        let mut sentences = split_sentences(paragraph);
        if sentences.is_empty() {
            return paragraph.to_string();
        }
        let picks = pick_indices(sentences.len(), config.fraction, &mut rng);
        for pick in picks {
            match &config.paraphraser {
                Paraphraser::DeterministicRules => {
                    sentences[pick] = rewrite_sentence(&sentences[pick]);
                }
                Paraphraser::Remote {
                    endpoint,
                    model,
                    auth_env,
                } => match remote_rewrite(&sentences[pick], endpoint, model, auth_env) {
                    Ok(replacement) => sentences[pick] = replacement,
                    Err(e) => failure = Some(e),
                },
            }
        }
        sentences.join(" ")
    });
    match failure {
        Some(e) => Err(e),
        None => Ok(rewritten),
    }
}

/// Paraphrase one sentence through an OpenAI-compatible chat endpoint.
fn remote_rewrite(sentence: &str, endpoint: &str, model: &str, auth_env: &str) -> Result<String> {
    let token = std::env::var(auth_env).map_err(|_| {
        Error::Remote(format!(
            "auth token environment variable {auth_env} is not set"
        ))
    })?;
    let url = format!("{}/chat/completions", endpoint.trim_end_matches('/'));
    let body = serde_json::json!({
        "model": model,
        "messages": [
            { "role": "system",
              "content": "Paraphrase the user's sentence, preserving its meaning. Reply with the paraphrase only." },
            { "role": "user", "content": sentence }
        ],
        "temperature": 1.0,
    });
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
                return json["choices"][0]["message"]["content"]
                    .as_str()
                    .map(|s| s.trim().to_string())
                    .filter(|s| !s.is_empty())
                    .ok_or_else(|| Error::Remote("response carries no paraphrase".into()));
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

/// Fraction of x's k-length contiguous windows that occur contiguously in
/// fx. Multiplicity is ignored: a window counts once if it appears at all.
pub fn local_consistency<T: Eq + Hash>(x: &[T], fx: &[T], k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    if x.len() < k {
        return Err(Error::invalid(format!(
            "input of length {} is shorter than k = {k}",
            x.len()
        )));
    }
    let present: HashSet<&[T]> = if fx.len() >= k {
        fx.windows(k).collect()
    } else {
        HashSet::new()
    };
    let total = x.len() - k + 1;
    let hits = x.windows(k).filter(|w| present.contains(*w)).count();
    Ok(hits as f64 / total as f64)
}

/// Word-token form of [`local_consistency`], with k counted in words.
pub fn local_consistency_text(x: &str, fx: &str, k: usize) -> Result<f64> {
    let xw: Vec<&str> = x.split_whitespace().collect();
    let fw: Vec<&str> = fx.split_whitespace().collect();
    local_consistency(&xw, &fw, k)
}

/// Euclidean distance and cosine similarity between the embeddings of two
/// texts.
pub fn embedding_drift(x: &str, fx: &str, embedder: &dyn Embedder) -> Result<(f64, f64)> {
    let a = embed_text(embedder, x)?;
    let b = embed_text(embedder, fx)?;
    Ok((a.euclidean_distance(&b), a.cosine_similarity(&b)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::embedder::HashedBagEmbedder;

    fn config(kind: AttackKind, fraction: f64) -> AttackConfig {
        AttackConfig {
            kind,
            mode: AttackMode::Global,
            fraction,
            ngram: 1,
            lexicon: None,
            paraphraser: Paraphraser::DeterministicRules,
            seed: 1,
        }
    }

    #[test]
    fn zero_fraction_is_identity_for_all_attacks() {
        let text = "Keep  this \t exactly as is.";
        let cfg = config(AttackKind::NgramShuffle, 0.0);
        assert_eq!(ngram_shuffle(text, &cfg), text);
        let lex = SynonymLexicon::parse("keep: hold").unwrap();
        let cfg = config(AttackKind::Synonym, 0.0);
        assert_eq!(synonym_substitute(text, &lex, &cfg), text);
        let cfg = config(AttackKind::Paraphrase, 0.0);
        assert_eq!(paraphrase(text, &cfg).unwrap(), text);
    }

    #[test]
    fn full_unigram_shuffle_preserves_multiset() {
        let cfg = AttackConfig {
            seed: 9,
            ..config(AttackKind::NgramShuffle, 1.0)
        };
        let out = ngram_shuffle("a b c d", &cfg);
        let mut words: Vec<&str> = out.split_whitespace().collect();
        words.sort_unstable();
        assert_eq!(words, vec!["a", "b", "c", "d"]);
    }

    #[test]
    fn shuffle_deterministic_per_seed() {
        let cfg = AttackConfig {
            seed: 5,
            ngram: 2,
            ..config(AttackKind::NgramShuffle, 0.8)
        };
        let text = "one two three four five six seven eight";
        assert_eq!(ngram_shuffle(text, &cfg), ngram_shuffle(text, &cfg));
        let other = AttackConfig { seed: 6, ..cfg };
        // Different seeds usually give different permutations.
        let _ = ngram_shuffle(text, &other);
    }

    #[test]
    fn local_shuffle_respects_sentence_boundaries() {
        // Over many random texts, every sentence keeps its own word multiset.
        use rand::Rng;
        let mut rng = ChaCha20Rng::seed_from_u64(77);
        for trial in 0..1000 {
            let n_sentences = rng.random_range(2..5);
            let sentences: Vec<String> = (0..n_sentences)
                .map(|s| {
                    let len = rng.random_range(3..9);
                    let words: Vec<String> = (0..len)
                        .map(|w| format!("s{s}w{}", rng.random_range(0..50.max(w + 1))))
                        .collect();
                    format!("{}.", words.join(" "))
                })
                .collect();
            let text = sentences.join(" ");
            let cfg = AttackConfig {
                mode: AttackMode::Local,
                seed: trial,
                ngram: 2,
                ..config(AttackKind::NgramShuffle, 1.0)
            };
            let attacked = ngram_shuffle(&text, &cfg);
            // Each original sentence's words must come back as a contiguous
            // group, so consuming the attacked words in original-sentence
            // sized runs recovers the same multisets.
            let attacked_words: Vec<&str> = attacked.split_whitespace().collect();
            let mut offset = 0;
            for sentence in split_sentences(&text) {
                let mut original: Vec<&str> = sentence.split_whitespace().collect();
                let mut group: Vec<&str> =
                    attacked_words[offset..offset + original.len()].to_vec();
                offset += original.len();
                original.sort_unstable();
                group.sort_unstable();
                assert_eq!(original, group, "trial {trial}: {text}");
            }
            assert_eq!(offset, attacked_words.len(), "trial {trial}");
        }
    }

    #[test]
    fn synonym_single_mapping() {
        let lex = SynonymLexicon::parse("big: large").unwrap();
        let cfg = AttackConfig {
            seed: 3,
            ..config(AttackKind::Synonym, 1.0)
        };
        assert_eq!(synonym_substitute("a big cat", &lex, &cfg), "a large cat");
    }

    #[test]
    fn synonym_preserves_word_count_and_punctuation() {
        use rand::Rng;
        let lex =
            SynonymLexicon::parse("big: large, huge\nfast: quick\nhappy: glad").unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(12);
        for trial in 0..200 {
            let len = rng.random_range(3..20);
            let pool = ["big", "fast", "happy", "stone", "river", "cloud"];
            let words: Vec<&str> = (0..len)
                .map(|_| pool[rng.random_range(0..pool.len())])
                .collect();
            let text = words.join(" ");
            let cfg = AttackConfig {
                seed: trial,
                ..config(AttackKind::Synonym, 0.5)
            };
            let out = synonym_substitute(&text, &lex, &cfg);
            assert_eq!(
                out.split_whitespace().count(),
                len,
                "word count changed on {text:?}"
            );
        }
        // Capitalization and trailing punctuation survive.
        let cfg = AttackConfig {
            seed: 0,
            ..config(AttackKind::Synonym, 1.0)
        };
        let out = synonym_substitute("Big cat, big dog!", &lex, &cfg);
        assert!(out.starts_with("Large") || out.starts_with("Huge"), "{out}");
        assert!(out.ends_with('!'), "{out}");
        assert!(out.contains(','), "{out}");
    }

    #[test]
    fn missing_lexicon_is_an_error() {
        let cfg = AttackConfig {
            lexicon: Some(PathBuf::from("/nonexistent/lexicon.txt")),
            ..config(AttackKind::Synonym, 0.5)
        };
        assert!(apply_attack("some text", &cfg).is_err());
        let no_path = config(AttackKind::Synonym, 0.5);
        assert!(apply_attack("some text", &no_path).is_err());
    }

    #[test]
    fn paraphrase_contraction_merge() {
        let cfg = AttackConfig {
            seed: 2,
            ..config(AttackKind::Paraphrase, 1.0)
        };
        assert_eq!(paraphrase("I can not go.", &cfg).unwrap(), "I cannot go.");
    }

    #[test]
    fn paraphrase_clause_swap_and_passive() {
        let cfg = AttackConfig {
            seed: 2,
            ..config(AttackKind::Paraphrase, 1.0)
        };
        assert_eq!(
            paraphrase("the road was long, and the night was cold.", &cfg).unwrap(),
            "the night was cold, and the road was long."
        );
        assert_eq!(
            paraphrase("dinner was cooked by sam", &cfg).unwrap(),
            "sam cooked dinner"
        );
    }

    #[test]
    fn consistency_identity_is_one() {
        let x: Vec<char> = "abcdef".chars().collect();
        assert_eq!(local_consistency(&x, &x, 2).unwrap(), 1.0);
    }

    #[test]
    fn consistency_disjoint_is_zero() {
        let x: Vec<char> = "abcd".chars().collect();
        let fx: Vec<char> = "zzzz".chars().collect();
        assert_eq!(local_consistency(&x, &fx, 2).unwrap(), 0.0);
    }

    #[test]
    fn consistency_worked_example() {
        // windows of "abcde": ab bc cd de; "cdeab" contains ab, cd, de.
        let x: Vec<char> = "abcde".chars().collect();
        let fx: Vec<char> = "cdeab".chars().collect();
        assert_eq!(local_consistency(&x, &fx, 2).unwrap(), 0.75);
    }

    #[test]
    fn consistency_rejects_short_input() {
        let x: Vec<char> = "ab".chars().collect();
        assert!(local_consistency(&x, &x, 3).is_err());
        assert!(local_consistency(&x, &x, 0).is_err());
    }

    /// Naive position-by-position scanner, the oracle for the hashed
    /// implementation.
    fn consistency_naive(x: &[char], fx: &[char], k: usize) -> f64 {
        let total = x.len() - k + 1;
        let mut hits = 0;
        for i in 0..total {
            let window = &x[i..i + k];
            let mut found = false;
            if fx.len() >= k {
                for j in 0..=fx.len() - k {
                    if &fx[j..j + k] == window {
                        found = true;
                        break;
                    }
                }
            }
            if found {
                hits += 1;
            }
        }
        hits as f64 / total as f64
    }

    #[test]
    fn consistency_matches_naive_scanner() {
        use rand::Rng;
        let mut rng = ChaCha20Rng::seed_from_u64(21);
        for _ in 0..300 {
            let len = rng.random_range(3..40);
            let x: Vec<char> = (0..len)
                .map(|_| (b'a' + rng.random_range(0..4)) as char)
                .collect();
            let fx_len = rng.random_range(1..40);
            let fx: Vec<char> = (0..fx_len)
                .map(|_| (b'a' + rng.random_range(0..4)) as char)
                .collect();
            let k = rng.random_range(1..=len.min(6));
            assert_eq!(
                local_consistency(&x, &fx, k).unwrap(),
                consistency_naive(&x, &fx, k)
            );
        }
    }

    #[test]
    fn drift_identity_and_symmetry() {
        let e = HashedBagEmbedder::default();
        let (d, cos) = embedding_drift("same words here", "same words here", &e).unwrap();
        assert!(d.abs() < 1e-12);
        assert!((cos - 1.0).abs() < 1e-12);
        let (d1, c1) = embedding_drift("alpha beta", "gamma delta", &e).unwrap();
        let (d2, c2) = embedding_drift("gamma delta", "alpha beta", &e).unwrap();
        assert_eq!(d1, d2);
        assert_eq!(c1, c2);
    }

    #[test]
    fn drift_orthogonal_for_disjoint_vocabularies() {
        use rand::Rng;
        let e = HashedBagEmbedder::default();
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let trials = 50;
        let mut total = 0.0;
        for _ in 0..trials {
            let a: Vec<String> = (0..12)
                .map(|_| format!("left{}", rng.random_range(0..10_000)))
                .collect();
            let b: Vec<String> = (0..12)
                .map(|_| format!("right{}", rng.random_range(0..10_000)))
                .collect();
            let (_, cos) = embedding_drift(&a.join(" "), &b.join(" "), &e).unwrap();
            total += cos.abs();
        }
        // Bucket collisions leave a little residue; on average it stays
        // below 0.1 for disjoint vocabularies.
        let mean = total / trials as f64;
        assert!(mean < 0.1, "mean |cosine| {mean} too large");
    }

    #[test]
    fn paraphrase_stays_semantically_closer_than_unrelated_text() {
        use rand::Rng;
        let e = HashedBagEmbedder::default();
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        let mut wins = 0;
        let trials = 200;
        for trial in 0..trials {
            let words: Vec<&str> = vec![
                "we", "can", "not", "wait", "for", "the", "rain", "it", "is", "late",
                "and", "the", "road", "was", "taken", "by", "many",
            ];
            let len = rng.random_range(8..16);
            let sentence: Vec<&str> = (0..len)
                .map(|_| words[rng.random_range(0..words.len())])
                .collect();
            let text = format!("{}.", sentence.join(" "));
            let cfg = AttackConfig {
                seed: trial,
                ..config(AttackKind::Paraphrase, 1.0)
            };
            let rewritten = paraphrase(&text, &cfg).unwrap();
            let unrelated: Vec<String> = (0..len)
                .map(|_| format!("noise{}", rng.random_range(0..100_000)))
                .collect();
            let (_, cos_para) = embedding_drift(&text, &rewritten, &e).unwrap();
            let (_, cos_unrel) =
                embedding_drift(&text, &unrelated.join(" "), &e).unwrap();
            if cos_para >= cos_unrel {
                wins += 1;
            }
        }
        assert_eq!(wins, trials, "paraphrase drifted past unrelated text");
    }

    #[test]
    fn config_validation() {
        let mut cfg = config(AttackKind::NgramShuffle, 1.5);
        assert!(cfg.validate().is_err());
        cfg.fraction = 0.5;
        cfg.ngram = 0;
        assert!(cfg.validate().is_err());
    }
}

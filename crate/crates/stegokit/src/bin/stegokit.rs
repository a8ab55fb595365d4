use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use stegokit::attacks::{self, AttackConfig, AttackKind, AttackMode, Paraphraser, SynonymLexicon};
use stegokit::channel::{ChannelHistory, HiddenMessage, SchemeKind, StegoDocument, WatermarkKeySet};
use stegokit::cost::{total_cost, CostModel};
use stegokit::ecc::{decode_payload, encode_payload};
use stegokit::embed::{self, embed_text, train_pca_lsh, HashedBagEmbedder, ThresholdRule};
use stegokit::error::Error;
use stegokit::experiments;
use stegokit::profile::Profile;
use stegokit::watermark;

#[derive(Parser)]
#[command(name = "stegokit", version, about = "Robust text steganography toolkit")]
struct Cli {
    /// Emit machine-readable JSON instead of plain text
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum AttackKindArg {
    NgramShuffle,
    Synonym,
    Paraphrase,
}

impl From<AttackKindArg> for AttackKind {
    fn from(value: AttackKindArg) -> Self {
        match value {
            AttackKindArg::NgramShuffle => AttackKind::NgramShuffle,
            AttackKindArg::Synonym => AttackKind::Synonym,
            AttackKindArg::Paraphrase => AttackKind::Paraphrase,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum AttackModeArg {
    Local,
    Global,
}

impl From<AttackModeArg> for AttackMode {
    fn from(value: AttackModeArg) -> Self {
        match value {
            AttackModeArg::Local => AttackMode::Local,
            AttackModeArg::Global => AttackMode::Global,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ThresholdArg {
    Zero,
    Median,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ExperimentKind {
    RecurringCgrams,
    DeltaVsLength,
    RejectionSampling,
    Drift,
    AttackSweep,
    Cost,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a master key file (lowercase hex)
    Keygen {
        #[arg(long)]
        out: PathBuf,
        /// Key size in bits
        #[arg(long, default_value_t = 256)]
        bits: usize,
        /// Derive the key deterministically from this seed
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Estimate the covertext length needed for a watermark message
    EstimateLength {
        #[arg(long)]
        bits: usize,
        #[arg(long)]
        delta: f64,
        #[arg(long)]
        epsilon: f64,
        #[arg(long, default_value_t = 1.0)]
        safety: f64,
    },
    /// Encode a message with the watermark codec
    EncodeWm {
        #[arg(long)]
        profile: PathBuf,
        #[arg(long)]
        key: PathBuf,
        /// Message bits, e.g. 101
        #[arg(long)]
        message: String,
        #[arg(long)]
        history: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Stego document (JSON) output path
        #[arg(long)]
        out: PathBuf,
        /// Also write the rendered covertext
        #[arg(long)]
        text_out: Option<PathBuf>,
    },
    /// Decode a watermark document
    DecodeWm {
        #[arg(long)]
        profile: PathBuf,
        #[arg(long)]
        key: PathBuf,
        /// Stego document JSON (from encode-wm)
        #[arg(long, conflicts_with = "text")]
        doc: Option<PathBuf>,
        /// Raw covertext file (for attacked or external text)
        #[arg(long)]
        text: Option<PathBuf>,
        #[arg(long)]
        history: Option<PathBuf>,
        /// Exit with status 2 unless the decoded bits equal this string
        #[arg(long)]
        expect: Option<String>,
    },
    /// Encode a message with the embedding codec
    EncodeEmbed {
        #[arg(long)]
        profile: PathBuf,
        /// Message bits, e.g. 10110100
        #[arg(long, conflicts_with = "data_text")]
        message: Option<String>,
        /// UTF-8 text payload, framed with a length header before coding
        #[arg(long)]
        data_text: Option<String>,
        #[arg(long)]
        history: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        text_out: Option<PathBuf>,
    },
    /// Decode an embedding document
    DecodeEmbed {
        #[arg(long)]
        profile: PathBuf,
        #[arg(long, conflicts_with = "text")]
        doc: Option<PathBuf>,
        #[arg(long)]
        text: Option<PathBuf>,
        /// Interpret the decoded bits as a framed text payload
        #[arg(long)]
        as_data: bool,
        #[arg(long)]
        expect: Option<String>,
    },
    /// Train a PCA LSH model on a directory of text files
    TrainPcaLsh {
        /// Directory of UTF-8 .txt files
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        hash_bits: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = embed::embedder::DEFAULT_EMBEDDING_DIM)]
        dim: usize,
        #[arg(long, value_enum, default_value_t = ThresholdArg::Zero)]
        threshold: ThresholdArg,
    },
    /// Tamper with a text file
    Attack {
        #[arg(long, value_enum)]
        kind: AttackKindArg,
        #[arg(long, value_enum, default_value_t = AttackModeArg::Global)]
        mode: AttackModeArg,
        #[arg(long)]
        fraction: f64,
        #[arg(long, default_value_t = 3)]
        ngram: usize,
        #[arg(long)]
        lexicon: Option<PathBuf>,
        /// Paraphrase via a remote OpenAI-compatible endpoint instead of
        /// the deterministic rule table
        #[arg(long, requires = "paraphrase_model")]
        paraphrase_endpoint: Option<String>,
        #[arg(long, requires = "paraphrase_endpoint")]
        paraphrase_model: Option<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fraction of k-word windows of the original that survive in the
    /// tampered text
    Consistency {
        #[arg(long)]
        original: PathBuf,
        #[arg(long)]
        tampered: PathBuf,
        #[arg(long)]
        k: usize,
    },
    /// Embedding distance between two texts
    Drift {
        #[arg(long)]
        original: PathBuf,
        #[arg(long)]
        tampered: PathBuf,
        #[arg(long, default_value_t = embed::embedder::DEFAULT_EMBEDDING_DIM)]
        dim: usize,
    },
    /// Query cost of hiding a message with the embedding codec
    Cost {
        #[arg(long)]
        bits: u64,
        #[arg(long)]
        hash_bits: u64,
        /// Expected queries per chunk; defaults to 2^hash_bits
        #[arg(long)]
        queries: Option<f64>,
        #[arg(long)]
        input_tokens: f64,
        #[arg(long)]
        output_tokens: f64,
        #[arg(long)]
        price_in: f64,
        #[arg(long)]
        price_out: f64,
    },
    /// Run a desk-scale experiment and write a CSV
    Experiment {
        #[arg(long, value_enum)]
        which: ExperimentKind,
        #[arg(long)]
        profile: Option<PathBuf>,
        #[arg(long)]
        key: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Trials / samples per grid point
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[arg(long, default_value_t = 100)]
        tokens_per_sample: usize,
        /// Comma-separated c or hash-bit grid
        #[arg(long, default_value = "1,2,3,4,5")]
        grid: String,
        /// Comma-separated attack fractions
        #[arg(long, default_value = "0.05,0.1,0.2,0.5")]
        fractions: String,
        #[arg(long, default_value_t = 3)]
        bits: usize,
        #[arg(long, default_value_t = 0.05)]
        epsilon: f64,
        #[arg(long)]
        lexicon: Option<PathBuf>,
        #[arg(long, default_value_t = 3)]
        consistency_k: usize,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // Help and version are normal exits, not usage errors.
            use clap::error::ErrorKind;
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            match err {
                Error::DecodeFailed(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

fn load_history(path: &Option<PathBuf>) -> Result<ChannelHistory, Error> {
    match path {
        None => Ok(ChannelHistory::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)?;
            Ok(serde_json::from_str(&text)?)
        }
    }
}

fn profile_base(path: &Path) -> Option<&Path> {
    path.parent().filter(|p| !p.as_os_str().is_empty())
}

fn read_doc_or_text(
    doc: &Option<PathBuf>,
    text: &Option<PathBuf>,
) -> Result<(Option<StegoDocument>, String), Error> {
    match (doc, text) {
        (Some(path), None) => {
            let doc = StegoDocument::load(path)?;
            let text = doc.text.clone();
            Ok((Some(doc), text))
        }
        (None, Some(path)) => Ok((None, std::fs::read_to_string(path)?)),
        _ => Err(Error::invalid("provide exactly one of --doc or --text")),
    }
}

fn parse_grid<T: std::str::FromStr>(grid: &str, what: &str) -> Result<Vec<T>, Error> {
    let values: Result<Vec<T>, _> = grid.split(',').map(|s| s.trim().parse::<T>()).collect();
    values.map_err(|_| Error::invalid(format!("cannot parse {what} grid {grid:?}")))
}

fn run(cli: Cli) -> Result<(), Error> {
    let json = cli.json;
    match cli.command {
        Command::Keygen { out, bits, seed } => {
            if bits == 0 || bits % 8 != 0 {
                return Err(Error::invalid("key bits must be a positive multiple of 8"));
            }
            let mut key = vec![0u8; bits / 8];
            match seed {
                Some(s) => ChaCha20Rng::seed_from_u64(s).fill(&mut key[..]),
                None => rand::rng().fill(&mut key[..]),
            }
            WatermarkKeySet::master_to_file(&out, &key)?;
            if json {
                println!(
                    "{}",
                    serde_json::json!({ "path": out, "bits": bits })
                );
            } else {
                println!("wrote {}-bit key to {}", bits, out.display());
            }
        }

        Command::EstimateLength {
            bits,
            delta,
            epsilon,
            safety,
        } => {
            let length = watermark::required_length(bits, delta, epsilon, safety)?;
            if json {
                println!(
                    "{}",
                    serde_json::json!({
                        "required_length": length,
                        "p_w": watermark::p_w(delta)?,
                        "z_threshold": watermark::detection_threshold(epsilon, bits)?,
                    })
                );
            } else {
                println!("{length}");
            }
        }

        Command::EncodeWm {
            profile,
            key,
            message,
            history,
            seed,
            out,
            text_out,
        } => {
            let prof = Profile::load(&profile)?;
            let base = profile_base(&profile);
            let params = prof
                .watermark
                .clone()
                .ok_or_else(|| Error::invalid("profile has no watermark params"))?;
            let master = WatermarkKeySet::master_from_file(&key, prof.key_bits)?;
            let keys = WatermarkKeySet::derive(&master, params.n_bits)?;
            let message = HiddenMessage::parse(&message)?;
            let history = load_history(&history)?;
            let model = prof.build_model(base)?;

            let recommended = params.recommended_length()?;
            if params.covertext_len < recommended {
                eprintln!(
                    "warning: covertext length {} is below the recommended {} tokens; \
                     decoding may be unreliable",
                    params.covertext_len, recommended
                );
            }

            let doc = watermark::encode(&keys, &message, &history, model.as_ref(), &params, seed)?;
            doc.save(&out)?;
            if let Some(path) = text_out {
                std::fs::write(path, &doc.text)?;
            }
            if json {
                println!(
                    "{}",
                    serde_json::json!({
                        "out": out,
                        "tokens": doc.token_indices.len(),
                        "recommended_length": recommended,
                    })
                );
            } else {
                println!(
                    "encoded {} bits into {} tokens -> {}",
                    message.len(),
                    doc.token_indices.len(),
                    out.display()
                );
            }
        }

        Command::DecodeWm {
            profile,
            key,
            doc,
            text,
            history,
            expect,
        } => {
            let prof = Profile::load(&profile)?;
            let base = profile_base(&profile);
            let params = prof
                .watermark
                .clone()
                .ok_or_else(|| Error::invalid("profile has no watermark params"))?;
            let master = WatermarkKeySet::master_from_file(&key, prof.key_bits)?;
            let keys = WatermarkKeySet::derive(&master, params.n_bits)?;
            let history = load_history(&history)?;
            let vocab = prof.load_vocabulary(base)?;
            let (_, text) = read_doc_or_text(&doc, &text)?;
            let tokens = vocab.tokenize(&text)?;
            let (decoded, report) =
                watermark::decode_tokens(&keys, &history, &tokens, vocab.size(), &params)?;

            if json {
                println!(
                    "{}",
                    serde_json::json!({
                        "message": decoded.to_string(),
                        "report": report,
                    })
                );
            } else {
                println!("{decoded}");
            }
            if let Some(expected) = expect {
                if HiddenMessage::parse(&expected)? != decoded {
                    return Err(Error::DecodeFailed(format!(
                        "decoded {decoded}, expected {expected}"
                    )));
                }
            }
        }

        Command::EncodeEmbed {
            profile,
            message,
            data_text,
            history,
            seed,
            out,
            text_out,
        } => {
            let prof = Profile::load(&profile)?;
            let base = profile_base(&profile);
            let params = prof
                .embedding
                .clone()
                .ok_or_else(|| Error::invalid("profile has no embedding params"))?;
            let bits = match (&message, &data_text) {
                (Some(bits), None) => HiddenMessage::parse(bits)?,
                (None, Some(data)) => {
                    let mut framed = encode_payload(data.as_bytes())?;
                    if framed.len() > params.n_bits {
                        return Err(Error::invalid(format!(
                            "payload needs {} bits but the profile allows {}",
                            framed.len(),
                            params.n_bits
                        )));
                    }
                    framed.resize(params.n_bits, 0);
                    HiddenMessage::from_bits(framed)?
                }
                _ => {
                    return Err(Error::invalid(
                        "provide exactly one of --message or --data-text",
                    ))
                }
            };
            if bits.len() != params.n_bits {
                return Err(Error::invalid(format!(
                    "message has {} bits, profile expects {}",
                    bits.len(),
                    params.n_bits
                )));
            }
            let history = load_history(&history)?;
            let model = prof.build_model(base)?;
            let embedder = HashedBagEmbedder::default();
            let lsh = prof.load_lsh(base)?;
            let (doc, report) = embed::encode_with_ecc(
                &bits,
                model.as_ref(),
                &embedder,
                &lsh,
                &history,
                &params,
                seed,
            )?;
            doc.save(&out)?;
            if let Some(path) = text_out {
                std::fs::write(path, &doc.text)?;
            }
            if json {
                println!(
                    "{}",
                    serde_json::json!({
                        "out": out,
                        "chunks": report.attempts.len(),
                        "mean_attempts": report.mean_attempts(),
                        "misses": report.miss_count(),
                    })
                );
            } else {
                println!(
                    "encoded {} bits in {} chunks (mean {:.2} attempts, {} misses) -> {}",
                    bits.len(),
                    report.attempts.len(),
                    report.mean_attempts(),
                    report.miss_count(),
                    out.display()
                );
            }
        }

        Command::DecodeEmbed {
            profile,
            doc,
            text,
            as_data,
            expect,
        } => {
            let prof = Profile::load(&profile)?;
            let base = profile_base(&profile);
            let params = prof
                .embedding
                .clone()
                .ok_or_else(|| Error::invalid("profile has no embedding params"))?;
            let embedder = HashedBagEmbedder::default();
            let lsh = prof.load_lsh(base)?;
            let (_, text) = read_doc_or_text(&doc, &text)?;
            let decoded = embed::decode_with_ecc(&text, &embedder, &lsh, &params)?;

            let payload = if as_data {
                let bytes = decode_payload(decoded.bits())
                    .map_err(|e| Error::DecodeFailed(format!("payload framing: {e}")))?;
                Some(String::from_utf8_lossy(&bytes).into_owned())
            } else {
                None
            };
            if json {
                println!(
                    "{}",
                    serde_json::json!({
                        "message": decoded.to_string(),
                        "data": payload,
                    })
                );
            } else if let Some(data) = &payload {
                println!("{data}");
            } else {
                println!("{decoded}");
            }
            if let Some(expected) = expect {
                if HiddenMessage::parse(&expected)? != decoded {
                    return Err(Error::DecodeFailed(format!(
                        "decoded {decoded}, expected {expected}"
                    )));
                }
            }
        }

        Command::TrainPcaLsh {
            corpus,
            hash_bits,
            out,
            dim,
            threshold,
        } => {
            let embedder = HashedBagEmbedder::new(dim)?;
            let mut paths: Vec<PathBuf> = std::fs::read_dir(&corpus)?
                .filter_map(|entry| entry.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|ext| ext == "txt"))
                .collect();
            paths.sort();
            if paths.is_empty() {
                return Err(Error::invalid(format!(
                    "no .txt files in {}",
                    corpus.display()
                )));
            }
            let mut vectors = Vec::new();
            for path in &paths {
                let text = std::fs::read_to_string(path)?;
                // Each paragraph is one training point.
                for block in text.split("\n\n").filter(|b| !b.trim().is_empty()) {
                    vectors.push(embed_text(&embedder, block)?);
                }
            }
            let rule = match threshold {
                ThresholdArg::Zero => ThresholdRule::Zero,
                ThresholdArg::Median => ThresholdRule::Median,
            };
            let model = train_pca_lsh(&vectors, hash_bits, rule)?;
            model.save(&out)?;
            if json {
                println!(
                    "{}",
                    serde_json::json!({
                        "out": out,
                        "training_vectors": vectors.len(),
                        "hash_bits": hash_bits,
                    })
                );
            } else {
                println!(
                    "trained {hash_bits}-bit PCA hash on {} vectors -> {}",
                    vectors.len(),
                    out.display()
                );
            }
        }

        Command::Attack {
            kind,
            mode,
            fraction,
            ngram,
            lexicon,
            paraphrase_endpoint,
            paraphrase_model,
            seed,
            input,
            out,
        } => {
            let text = std::fs::read_to_string(&input)?;
            let paraphraser = match (paraphrase_endpoint, paraphrase_model) {
                (Some(endpoint), Some(model)) => Paraphraser::Remote {
                    endpoint,
                    model,
                    auth_env: "STEGOKIT_API_KEY".to_string(),
                },
                _ => Paraphraser::DeterministicRules,
            };
            let config = AttackConfig {
                kind: kind.into(),
                mode: mode.into(),
                fraction,
                ngram,
                lexicon,
                paraphraser,
                seed,
            };
            let attacked = attacks::apply_attack(&text, &config)?;
            std::fs::write(&out, &attacked)?;
            if json {
                println!(
                    "{}",
                    serde_json::json!({ "out": out, "changed": attacked != text })
                );
            } else {
                println!("wrote attacked text to {}", out.display());
            }
        }

        Command::Consistency {
            original,
            tampered,
            k,
        } => {
            let x = std::fs::read_to_string(&original)?;
            let fx = std::fs::read_to_string(&tampered)?;
            let value = attacks::local_consistency_text(&x, &fx, k)?;
            if json {
                println!("{}", serde_json::json!({ "consistency": value, "k": k }));
            } else {
                println!("{value}");
            }
        }

        Command::Drift {
            original,
            tampered,
            dim,
        } => {
            let x = std::fs::read_to_string(&original)?;
            let fx = std::fs::read_to_string(&tampered)?;
            let embedder = HashedBagEmbedder::new(dim)?;
            let (euclid, cosine) = attacks::embedding_drift(&x, &fx, &embedder)?;
            if json {
                println!(
                    "{}",
                    serde_json::json!({ "euclidean": euclid, "cosine": cosine })
                );
            } else {
                println!("euclidean {euclid}");
                println!("cosine {cosine}");
            }
        }

        Command::Cost {
            bits,
            hash_bits,
            queries,
            input_tokens,
            output_tokens,
            price_in,
            price_out,
        } => {
            let model = CostModel {
                n_bits: bits,
                bits_per_chunk: hash_bits,
                queries_per_chunk: queries,
                input_tokens,
                output_tokens,
                price_in,
                price_out,
            };
            let cost = total_cost(&model)?;
            if json {
                println!(
                    "{}",
                    serde_json::json!({
                        "total_cost": cost,
                        "queries_per_chunk": model.effective_queries(),
                    })
                );
            } else {
                println!("{cost}");
            }
        }

        Command::Experiment {
            which,
            profile,
            key,
            out,
            seed,
            trials,
            tokens_per_sample,
            grid,
            fractions,
            bits,
            epsilon,
            lexicon,
            consistency_k,
        } => {
            run_experiment(ExperimentArgs {
                which,
                profile,
                key,
                out: out.clone(),
                seed,
                trials,
                tokens_per_sample,
                grid,
                fractions,
                bits,
                epsilon,
                lexicon,
                consistency_k,
            })?;
            if json {
                println!("{}", serde_json::json!({ "out": out }));
            } else {
                println!("wrote {}", out.display());
            }
        }
    }
    Ok(())
}

struct ExperimentArgs {
    which: ExperimentKind,
    profile: Option<PathBuf>,
    key: Option<PathBuf>,
    out: PathBuf,
    seed: u64,
    trials: usize,
    tokens_per_sample: usize,
    grid: String,
    fractions: String,
    bits: usize,
    epsilon: f64,
    lexicon: Option<PathBuf>,
    consistency_k: usize,
}

fn require_profile(args: &ExperimentArgs) -> Result<(Profile, Option<PathBuf>), Error> {
    let path = args
        .profile
        .as_ref()
        .ok_or_else(|| Error::invalid("this experiment requires --profile"))?;
    let prof = Profile::load(path)?;
    let base = profile_base(path).map(Path::to_path_buf);
    Ok((prof, base))
}

fn run_experiment(args: ExperimentArgs) -> Result<(), Error> {
    match args.which {
        ExperimentKind::RecurringCgrams => {
            let (prof, base) = require_profile(&args)?;
            let model = prof.build_model(base.as_deref())?;
            let c_values: Vec<usize> = parse_grid(&args.grid, "c")?;
            let rows = experiments::recurring_cgrams(
                model.as_ref(),
                args.trials,
                args.tokens_per_sample,
                &c_values,
                args.seed,
            )?;
            let lines: Vec<String> = rows.iter().map(|r| r.csv_line()).collect();
            experiments::write_csv(&args.out, experiments::RECURRING_CGRAMS_HEADER, &lines)?;
        }
        ExperimentKind::DeltaVsLength => {
            let deltas: Vec<f64> = parse_grid(&args.grid, "delta")?;
            let rows = experiments::delta_vs_length(args.bits, args.epsilon, &deltas)?;
            let lines: Vec<String> = rows.iter().map(|(d, t)| format!("{d},{t}")).collect();
            experiments::write_csv(&args.out, experiments::DELTA_LENGTH_HEADER, &lines)?;
        }
        ExperimentKind::RejectionSampling => {
            let (prof, base) = require_profile(&args)?;
            let model = prof.build_model(base.as_deref())?;
            let embedder = HashedBagEmbedder::default();
            let hash_bits: Vec<usize> = parse_grid(&args.grid, "hash bits")?;
            let rows = experiments::rejection_sampling(
                model.as_ref(),
                &embedder,
                &hash_bits,
                args.trials.max(1),
                256,
                args.seed,
            )?;
            let lines: Vec<String> = rows.iter().map(|r| r.csv_line()).collect();
            experiments::write_csv(&args.out, experiments::REJECTION_HEADER, &lines)?;
        }
        ExperimentKind::Drift => {
            let (prof, base) = require_profile(&args)?;
            let model = prof.build_model(base.as_deref())?;
            let embedder = HashedBagEmbedder::default();
            let lexicon = args
                .lexicon
                .as_ref()
                .map(SynonymLexicon::from_file)
                .transpose()?;
            let fractions: Vec<f64> = parse_grid(&args.fractions, "fraction")?;
            let rows = experiments::drift_experiment(
                model.as_ref(),
                &embedder,
                lexicon.as_ref(),
                &[
                    AttackKind::NgramShuffle,
                    AttackKind::Synonym,
                    AttackKind::Paraphrase,
                ],
                &fractions,
                args.trials,
                args.tokens_per_sample,
                args.consistency_k,
                args.seed,
            )?;
            let lines: Vec<String> = rows.iter().map(|r| r.csv_line()).collect();
            experiments::write_csv(&args.out, experiments::DRIFT_HEADER, &lines)?;
        }
        ExperimentKind::AttackSweep => {
            let (prof, base) = require_profile(&args)?;
            let model = prof.build_model(base.as_deref())?;
            let embedder = HashedBagEmbedder::default();
            let lexicon = args
                .lexicon
                .as_ref()
                .map(SynonymLexicon::from_file)
                .transpose()?;
            let fractions: Vec<f64> = parse_grid(&args.fractions, "fraction")?;
            let kinds = vec![
                (AttackKind::NgramShuffle, AttackMode::Local),
                (AttackKind::NgramShuffle, AttackMode::Global),
                (AttackKind::Synonym, AttackMode::Global),
                (AttackKind::Paraphrase, AttackMode::Global),
            ];
            let settings = experiments::SweepSettings {
                kinds,
                fractions,
                trials: args.trials,
                ngram: 3,
                consistency_k: args.consistency_k,
                lexicon: lexicon.as_ref(),
            };
            let rows = match prof.scheme {
                SchemeKind::Watermark => {
                    let key_path = args
                        .key
                        .as_ref()
                        .ok_or_else(|| Error::invalid("watermark sweep requires --key"))?;
                    let master = WatermarkKeySet::master_from_file(key_path, prof.key_bits)?;
                    let params = prof
                        .watermark
                        .clone()
                        .ok_or_else(|| Error::invalid("profile has no watermark params"))?;
                    let vocab = prof.load_vocabulary(base.as_deref())?;
                    experiments::attack_sweep_watermark(
                        model.as_ref(),
                        &vocab,
                        &master,
                        &params,
                        &embedder,
                        &settings,
                        args.seed,
                    )?
                }
                SchemeKind::Embedding => {
                    let params = prof
                        .embedding
                        .clone()
                        .ok_or_else(|| Error::invalid("profile has no embedding params"))?;
                    let lsh = prof.load_lsh(base.as_deref())?;
                    experiments::attack_sweep_embedding(
                        model.as_ref(),
                        &embedder,
                        &lsh,
                        &params,
                        &settings,
                        args.seed,
                    )?
                }
            };
            let lines: Vec<String> = rows.iter().map(|r| r.csv_line()).collect();
            experiments::write_csv(&args.out, experiments::ATTACK_SWEEP_HEADER, &lines)?;
        }
        ExperimentKind::Cost => {
            let chunk_bits: Vec<u64> = parse_grid(&args.grid, "hash bits")?;
            let rows = experiments::cost_table(
                args.bits as u64,
                &chunk_bits,
                500.0,
                100.0,
                1e-7,
                4e-7,
            )?;
            let lines: Vec<String> = rows
                .iter()
                .map(|(n, h, c, cost)| format!("{n},{h},{c},{cost}"))
                .collect();
            experiments::write_csv(&args.out, experiments::COST_HEADER, &lines)?;
        }
    }
    Ok(())
}

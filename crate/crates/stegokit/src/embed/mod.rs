//! The strong-robustness codec: embeddings, locality-sensitive hashes, and
//! the chunked rejection-sampling encoder/decoder built on them.

pub mod codec;
pub mod embedder;
pub mod lsh;

pub use codec::{
    decode, decode_with_ecc, encode, encode_with_ecc, split_chunks, AttemptReport, ChunkPlan,
    EmbedParams, CHUNK_DELIMITER,
};
pub use embedder::{embed_text, Embedder, EmbeddingVector, HashedBagEmbedder, RemoteEmbedder};
pub use lsh::{lsh_hash, train_pca_lsh, LshModel, OracleMode, ThresholdRule};

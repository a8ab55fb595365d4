//! Robust text steganography over pluggable covertext channels.
//!
//! Two codecs are provided. The watermark codec spreads message bits across
//! the whole document by tilting the channel's token distributions with
//! keyed PRF labels, and recovers them with per-key z-tests; it tolerates
//! local edits. The embedding codec hides hash-sized bit chunks in the
//! semantic embedding of each passage via rejection sampling against a
//! locality-sensitive hash; it tolerates meaning-preserving paraphrase.
//!
//! Supporting modules: deterministic covertext channels for offline work
//! ([`langmodel`]), error correction ([`ecc`]), a tampering simulator and
//! robustness measures ([`attacks`]), a cost model ([`cost`]), and the
//! experiment harness behind the CLI ([`experiments`]).

pub mod attacks;
pub mod channel;
pub mod cost;
pub mod ecc;
pub mod embed;
pub mod error;
pub mod experiments;
pub mod langmodel;
pub mod prf;
pub mod profile;
pub mod stats;
pub mod watermark;

pub use channel::{
    derive_salt, derive_subkeys, ChannelHistory, CodecParams, HiddenMessage, SchemeKind,
    StegoDocument, Vocabulary, WatermarkKeySet,
};
pub use error::{Error, Result};

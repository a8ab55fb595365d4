//! C ABI for the stegokit toolkit.
//!
//! Conventions:
//! - Every fallible call returns an [`SkStatus`]; `SK_STATUS_OK` is 0.
//! - Strings returned through `char**` out-parameters are heap allocated
//!   and must be released with [`sk_string_free`].
//! - [`sk_last_error_message`] returns a thread-local description of the
//!   most recent failure; the pointer is valid until the next failing call
//!   on the same thread.
//! - `SkProfile` is an opaque handle created by [`sk_profile_load`] and
//!   released with [`sk_profile_free`].

#![deny(unsafe_op_in_unsafe_fn)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::path::{Path, PathBuf};
use std::ptr;

use stegokit::attacks::{self, AttackConfig, AttackKind, AttackMode};
use stegokit::channel::{ChannelHistory, HiddenMessage, StegoDocument, WatermarkKeySet};
use stegokit::embed::{self, HashedBagEmbedder};
use stegokit::error::Error;
use stegokit::profile::Profile;
use stegokit::stats;
use stegokit::watermark;

/// Result codes for every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SkStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    IoError = 4,
    DecodeFailed = 5,
    RemoteError = 6,
    InternalError = 7,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let cstring = CString::new(message)
        .unwrap_or_else(|_| CString::new("error message contained NUL").unwrap());
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(cstring));
}

fn status_of(err: &Error) -> SkStatus {
    match err {
        Error::InvalidArgument(_) => SkStatus::InvalidArgument,
        Error::DecodeFailed(_) | Error::Framing(_) => SkStatus::DecodeFailed,
        Error::Io(_) => SkStatus::IoError,
        Error::Remote(_) => SkStatus::RemoteError,
        Error::Serialization(_) => SkStatus::InvalidArgument,
    }
}

fn fail(err: Error) -> SkStatus {
    let status = status_of(&err);
    set_error(err.to_string());
    status
}

/// Opaque profile handle.
pub struct SkProfile {
    profile: Profile,
    base: Option<PathBuf>,
}

unsafe fn cstr<'a>(ptr: *const c_char) -> Result<&'a str, SkStatus> {
    if ptr.is_null() {
        set_error("null pointer argument".into());
        return Err(SkStatus::NullPointer);
    }
    unsafe { CStr::from_ptr(ptr) }.to_str().map_err(|_| {
        set_error("argument is not valid UTF-8".into());
        SkStatus::InvalidUtf8
    })
}

fn give_string(out: *mut *mut c_char, value: String) -> SkStatus {
    if out.is_null() {
        set_error("null output pointer".into());
        return SkStatus::NullPointer;
    }
    match CString::new(value) {
        Ok(cstring) => {
            unsafe { *out = cstring.into_raw() };
            SkStatus::Ok
        }
        Err(_) => {
            set_error("output contained an interior NUL byte".into());
            SkStatus::InternalError
        }
    }
}

fn parse_history(history_json: *const c_char) -> Result<ChannelHistory, SkStatus> {
    if history_json.is_null() {
        return Ok(ChannelHistory::default());
    }
    let text = unsafe { cstr(history_json)? };
    serde_json::from_str(text).map_err(|e| {
        set_error(format!("bad history JSON: {e}"));
        SkStatus::InvalidArgument
    })
}

/// Library version, a static string; do not free.
#[no_mangle]
pub extern "C" fn sk_version() -> *const c_char {
    static VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr() as *const c_char
}

/// Description of the most recent error on this thread, or NULL if none.
/// Valid until the next failing call on the same thread; do not free.
#[no_mangle]
pub extern "C" fn sk_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| {
        slot.borrow()
            .as_ref()
            .map(|msg| msg.as_ptr())
            .unwrap_or(ptr::null())
    })
}

/// Release a string returned through a `char**` out-parameter.
///
/// # Safety
/// `ptr` must have been produced by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sk_string_free(ptr: *mut c_char) {
    if !ptr.is_null() {
        drop(unsafe { CString::from_raw(ptr) });
    }
}

/// Sampled-label-1 probability under an active key: 2(1 + delta)/(4 + delta).
///
/// # Safety
/// All pointer arguments must be valid for the duration of the call;
/// `const char*` arguments must be NUL-terminated strings. NULL is
/// checked and reported as a status, any other invalid pointer is
/// undefined behavior, as in any C API.
#[no_mangle]
pub unsafe extern "C" fn sk_p_w(delta: f64, out: *mut f64) -> SkStatus {
    if out.is_null() {
        set_error("null output pointer".into());
        return SkStatus::NullPointer;
    }
    match watermark::p_w(delta) {
        Ok(value) => {
            unsafe { *out = value };
            SkStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Covertext length needed to decode `n_bits` with overall error `epsilon`.
///
/// # Safety
/// All pointer arguments must be valid for the duration of the call;
/// `const char*` arguments must be NUL-terminated strings. NULL is
/// checked and reported as a status, any other invalid pointer is
/// undefined behavior, as in any C API.
#[no_mangle]
pub unsafe extern "C" fn sk_required_length(
    n_bits: u32,
    delta: f64,
    epsilon: f64,
    safety_factor: f64,
    out: *mut u64,
) -> SkStatus {
    if out.is_null() {
        set_error("null output pointer".into());
        return SkStatus::NullPointer;
    }
    match watermark::required_length(n_bits as usize, delta, epsilon, safety_factor) {
        Ok(value) => {
            unsafe { *out = value as u64 };
            SkStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Inverse standard normal CDF.
///
/// # Safety
/// All pointer arguments must be valid for the duration of the call;
/// `const char*` arguments must be NUL-terminated strings. NULL is
/// checked and reported as a status, any other invalid pointer is
/// undefined behavior, as in any C API.
#[no_mangle]
pub unsafe extern "C" fn sk_inverse_normal_cdf(p: f64, out: *mut f64) -> SkStatus {
    if out.is_null() {
        set_error("null output pointer".into());
        return SkStatus::NullPointer;
    }
    match stats::inverse_normal_cdf(p) {
        Ok(value) => {
            unsafe { *out = value };
            SkStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Load a codec profile from a JSON file.
///
/// # Safety
/// All pointer arguments must be valid for the duration of the call;
/// `const char*` arguments must be NUL-terminated strings. NULL is
/// checked and reported as a status, any other invalid pointer is
/// undefined behavior, as in any C API.
#[no_mangle]
pub unsafe extern "C" fn sk_profile_load(path: *const c_char, out: *mut *mut SkProfile) -> SkStatus {
    if out.is_null() {
        set_error("null output pointer".into());
        return SkStatus::NullPointer;
    }
    let path = match unsafe { cstr(path) } {
        Ok(p) => p,
        Err(status) => return status,
    };
    match Profile::load(path) {
        Ok(profile) => {
            let base = Path::new(path)
                .parent()
                .filter(|p| !p.as_os_str().is_empty())
                .map(Path::to_path_buf);
            let handle = Box::new(SkProfile { profile, base });
            unsafe { *out = Box::into_raw(handle) };
            SkStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Release a profile handle.
///
/// # Safety
/// `profile` must come from [`sk_profile_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sk_profile_free(profile: *mut SkProfile) {
    if !profile.is_null() {
        drop(unsafe { Box::from_raw(profile) });
    }
}

unsafe fn profile_ref<'a>(ptr: *const SkProfile) -> Result<&'a SkProfile, SkStatus> {
    if ptr.is_null() {
        set_error("null profile handle".into());
        return Err(SkStatus::NullPointer);
    }
    Ok(unsafe { &*ptr })
}

/// Encode `message_bits` (a string like "101") with the watermark codec.
/// On success `*out_doc_json` holds the stego document as JSON.
///
/// # Safety
/// All pointer arguments must be valid for the duration of the call;
/// `const char*` arguments must be NUL-terminated strings. NULL is
/// checked and reported as a status, any other invalid pointer is
/// undefined behavior, as in any C API.
#[no_mangle]
pub unsafe extern "C" fn sk_watermark_encode(
    profile: *const SkProfile,
    key_hex: *const c_char,
    message_bits: *const c_char,
    history_json: *const c_char,
    seed: u64,
    out_doc_json: *mut *mut c_char,
) -> SkStatus {
    let run = || -> Result<String, SkStatus> {
        let handle = unsafe { profile_ref(profile)? };
        let key_hex = unsafe { cstr(key_hex)? };
        let bits = unsafe { cstr(message_bits)? };
        let history = parse_history(history_json)?;

        let inner = || -> Result<String, Error> {
            let params = handle
                .profile
                .watermark
                .clone()
                .ok_or_else(|| Error::invalid("profile has no watermark params"))?;
            let master = hex::decode(key_hex.trim())
                .map_err(|e| Error::invalid(format!("key is not valid hex: {e}")))?;
            let keys = WatermarkKeySet::derive(&master, params.n_bits)?;
            let message = HiddenMessage::parse(bits)?;
            let model = handle.profile.build_model(handle.base.as_deref())?;
            let doc = watermark::encode(&keys, &message, &history, model.as_ref(), &params, seed)?;
            doc.to_json()
        };
        inner().map_err(fail_err)
    };
    match run() {
        Ok(json) => give_string(out_doc_json, json),
        Err(status) => status,
    }
}

fn fail_err(err: Error) -> SkStatus {
    fail(err)
}

/// Decode a watermark stego document (JSON, as produced by
/// [`sk_watermark_encode`]). On success `*out_bits` holds the message bits.
///
/// # Safety
/// All pointer arguments must be valid for the duration of the call;
/// `const char*` arguments must be NUL-terminated strings. NULL is
/// checked and reported as a status, any other invalid pointer is
/// undefined behavior, as in any C API.
#[no_mangle]
pub unsafe extern "C" fn sk_watermark_decode(
    profile: *const SkProfile,
    key_hex: *const c_char,
    doc_json: *const c_char,
    history_json: *const c_char,
    out_bits: *mut *mut c_char,
) -> SkStatus {
    let run = || -> Result<String, SkStatus> {
        let handle = unsafe { profile_ref(profile)? };
        let key_hex = unsafe { cstr(key_hex)? };
        let doc_json = unsafe { cstr(doc_json)? };
        let history = parse_history(history_json)?;

        let inner = || -> Result<String, Error> {
            let params = handle
                .profile
                .watermark
                .clone()
                .ok_or_else(|| Error::invalid("profile has no watermark params"))?;
            let master = hex::decode(key_hex.trim())
                .map_err(|e| Error::invalid(format!("key is not valid hex: {e}")))?;
            let keys = WatermarkKeySet::derive(&master, params.n_bits)?;
            let vocab = handle.profile.load_vocabulary(handle.base.as_deref())?;
            let doc = StegoDocument::from_json(doc_json)?;
            let (message, _) = watermark::decode(&keys, &history, &doc, &vocab, &params)?;
            Ok(message.to_string())
        };
        inner().map_err(fail_err)
    };
    match run() {
        Ok(bits) => give_string(out_bits, bits),
        Err(status) => status,
    }
}

/// Encode `message_bits` with the embedding codec (error correction and
/// hash model come from the profile). `*out_doc_json` holds the document.
///
/// # Safety
/// All pointer arguments must be valid for the duration of the call;
/// `const char*` arguments must be NUL-terminated strings. NULL is
/// checked and reported as a status, any other invalid pointer is
/// undefined behavior, as in any C API.
#[no_mangle]
pub unsafe extern "C" fn sk_embed_encode(
    profile: *const SkProfile,
    message_bits: *const c_char,
    history_json: *const c_char,
    seed: u64,
    out_doc_json: *mut *mut c_char,
) -> SkStatus {
    let run = || -> Result<String, SkStatus> {
        let handle = unsafe { profile_ref(profile)? };
        let bits = unsafe { cstr(message_bits)? };
        let history = parse_history(history_json)?;

        let inner = || -> Result<String, Error> {
            let params = handle
                .profile
                .embedding
                .clone()
                .ok_or_else(|| Error::invalid("profile has no embedding params"))?;
            let message = HiddenMessage::parse(bits)?;
            let model = handle.profile.build_model(handle.base.as_deref())?;
            let embedder = HashedBagEmbedder::default();
            let lsh = handle.profile.load_lsh(handle.base.as_deref())?;
            let (doc, _) = embed::encode_with_ecc(
                &message,
                model.as_ref(),
                &embedder,
                &lsh,
                &history,
                &params,
                seed,
            )?;
            doc.to_json()
        };
        inner().map_err(fail_err)
    };
    match run() {
        Ok(json) => give_string(out_doc_json, json),
        Err(status) => status,
    }
}

/// Decode covertext produced by the embedding codec. `text` may be either
/// a stego-document JSON or raw covertext; it is treated as raw covertext.
///
/// # Safety
/// All pointer arguments must be valid for the duration of the call;
/// `const char*` arguments must be NUL-terminated strings. NULL is
/// checked and reported as a status, any other invalid pointer is
/// undefined behavior, as in any C API.
#[no_mangle]
pub unsafe extern "C" fn sk_embed_decode(
    profile: *const SkProfile,
    text: *const c_char,
    out_bits: *mut *mut c_char,
) -> SkStatus {
    let run = || -> Result<String, SkStatus> {
        let handle = unsafe { profile_ref(profile)? };
        let text = unsafe { cstr(text)? };

        let inner = || -> Result<String, Error> {
            let params = handle
                .profile
                .embedding
                .clone()
                .ok_or_else(|| Error::invalid("profile has no embedding params"))?;
            let embedder = HashedBagEmbedder::default();
            let lsh = handle.profile.load_lsh(handle.base.as_deref())?;
            let message = embed::decode_with_ecc(text, &embedder, &lsh, &params)?;
            Ok(message.to_string())
        };
        inner().map_err(fail_err)
    };
    match run() {
        Ok(bits) => give_string(out_bits, bits),
        Err(status) => status,
    }
}

/// Tamper with text. `kind` is one of "ngram_shuffle", "synonym",
/// "paraphrase"; `mode` is "local" or "global". The synonym attack needs
/// `lexicon_path`; other attacks pass NULL.
///
/// # Safety
/// All pointer arguments must be valid for the duration of the call;
/// `const char*` arguments must be NUL-terminated strings. NULL is
/// checked and reported as a status, any other invalid pointer is
/// undefined behavior, as in any C API.
#[no_mangle]
pub unsafe extern "C" fn sk_attack_text(
    kind: *const c_char,
    mode: *const c_char,
    fraction: f64,
    ngram: u32,
    lexicon_path: *const c_char,
    seed: u64,
    text: *const c_char,
    out_text: *mut *mut c_char,
) -> SkStatus {
    let run = || -> Result<String, SkStatus> {
        let kind = match unsafe { cstr(kind)? } {
            "ngram_shuffle" => AttackKind::NgramShuffle,
            "synonym" => AttackKind::Synonym,
            "paraphrase" => AttackKind::Paraphrase,
            other => {
                set_error(format!("unknown attack kind {other:?}"));
                return Err(SkStatus::InvalidArgument);
            }
        };
        let mode = match unsafe { cstr(mode)? } {
            "local" => AttackMode::Local,
            "global" => AttackMode::Global,
            other => {
                set_error(format!("unknown attack mode {other:?}"));
                return Err(SkStatus::InvalidArgument);
            }
        };
        let lexicon = if lexicon_path.is_null() {
            None
        } else {
            Some(PathBuf::from(unsafe { cstr(lexicon_path)? }))
        };
        let text = unsafe { cstr(text)? };
        let config = AttackConfig {
            kind,
            mode,
            fraction,
            ngram: ngram as usize,
            lexicon,
            paraphraser: Default::default(),
            seed,
        };
        attacks::apply_attack(text, &config).map_err(fail_err)
    };
    match run() {
        Ok(attacked) => give_string(out_text, attacked),
        Err(status) => status,
    }
}

/// Fraction of the original's k-word windows that survive in the tampered
/// text.
///
/// # Safety
/// All pointer arguments must be valid for the duration of the call;
/// `const char*` arguments must be NUL-terminated strings. NULL is
/// checked and reported as a status, any other invalid pointer is
/// undefined behavior, as in any C API.
#[no_mangle]
pub unsafe extern "C" fn sk_local_consistency(
    original: *const c_char,
    tampered: *const c_char,
    k: u32,
    out: *mut f64,
) -> SkStatus {
    if out.is_null() {
        set_error("null output pointer".into());
        return SkStatus::NullPointer;
    }
    let run = || -> Result<f64, SkStatus> {
        let x = unsafe { cstr(original)? };
        let fx = unsafe { cstr(tampered)? };
        attacks::local_consistency_text(x, fx, k as usize).map_err(fail_err)
    };
    match run() {
        Ok(value) => {
            unsafe { *out = value };
            SkStatus::Ok
        }
        Err(status) => status,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ffi::CString;

    fn c(s: &str) -> CString {
        CString::new(s).unwrap()
    }

    unsafe fn take_string(ptr: *mut c_char) -> String {
        let value = unsafe { CStr::from_ptr(ptr) }.to_str().unwrap().to_string();
        unsafe { sk_string_free(ptr) };
        value
    }

    #[test]
    fn scalar_helpers() {
        let mut value = 0f64;
        assert_eq!(unsafe { sk_p_w(0.1, &mut value) }, SkStatus::Ok);
        assert!((value - 2.2 / 4.1).abs() < 1e-12);
        assert_eq!(unsafe { sk_p_w(1.5, &mut value) }, SkStatus::InvalidArgument);
        assert!(!sk_last_error_message().is_null());

        let mut length = 0u64;
        assert_eq!(
            unsafe { sk_required_length(3, 0.1, 0.05, 1.0, &mut length) },
            SkStatus::Ok
        );
        assert!((7000..=8500).contains(&(length as usize)));

        let mut z = 0f64;
        assert_eq!(unsafe { sk_inverse_normal_cdf(0.95, &mut z) }, SkStatus::Ok);
        assert!((z - 1.644854).abs() < 1e-6);
    }

    #[test]
    fn null_arguments_are_rejected() {
        let mut out = 0f64;
        assert_eq!(
            unsafe { sk_p_w(0.1, std::ptr::null_mut()) },
            SkStatus::NullPointer
        );
        assert_eq!(
            unsafe { sk_local_consistency(std::ptr::null(), std::ptr::null(), 2, &mut out) },
            SkStatus::NullPointer
        );
        let mut handle: *mut SkProfile = std::ptr::null_mut();
        assert_eq!(
            unsafe { sk_profile_load(std::ptr::null(), &mut handle) },
            SkStatus::NullPointer
        );
    }

    #[test]
    fn consistency_through_the_abi() {
        let a = c("the quick bird in the garden");
        let b = c("in the garden the quick bird");
        let mut value = 0f64;
        assert_eq!(
            unsafe { sk_local_consistency(a.as_ptr(), b.as_ptr(), 2, &mut value) },
            SkStatus::Ok
        );
        assert!((0.0..=1.0).contains(&value));
        assert_eq!(
            unsafe { sk_local_consistency(a.as_ptr(), b.as_ptr(), 0, &mut value) },
            SkStatus::InvalidArgument
        );
    }

    #[test]
    fn attack_through_the_abi() {
        let kind = c("ngram_shuffle");
        let mode = c("global");
        let text = c("one two three four five six");
        let mut out: *mut c_char = std::ptr::null_mut();
        let status = unsafe {
            sk_attack_text(
                kind.as_ptr(),
                mode.as_ptr(),
                1.0,
                1,
                std::ptr::null(),
                9,
                text.as_ptr(),
                &mut out,
            )
        };
        assert_eq!(status, SkStatus::Ok);
        let attacked = unsafe { take_string(out) };
        let mut words: Vec<&str> = attacked.split_whitespace().collect();
        words.sort_unstable();
        assert_eq!(words, vec!["five", "four", "one", "six", "three", "two"]);

        let bad = c("no_such_attack");
        let mut out: *mut c_char = std::ptr::null_mut();
        let status = unsafe {
            sk_attack_text(
                bad.as_ptr(),
                mode.as_ptr(),
                0.5,
                1,
                std::ptr::null(),
                0,
                text.as_ptr(),
                &mut out,
            )
        };
        assert_eq!(status, SkStatus::InvalidArgument);
    }
}

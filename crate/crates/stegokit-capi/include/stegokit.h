#ifndef STEGOKIT_H
#define STEGOKIT_H

/* Generated by cbindgen from the stegokit-capi crate; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes for every fallible call.
typedef enum SkStatus {
  SK_STATUS_OK = 0,
  SK_STATUS_NULL_POINTER = 1,
  SK_STATUS_INVALID_UTF8 = 2,
  SK_STATUS_INVALID_ARGUMENT = 3,
  SK_STATUS_IO_ERROR = 4,
  SK_STATUS_DECODE_FAILED = 5,
  SK_STATUS_REMOTE_ERROR = 6,
  SK_STATUS_INTERNAL_ERROR = 7,
} SkStatus;

// Opaque profile handle.
typedef struct SkProfile SkProfile;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version, a static string; do not free.
const char *sk_version(void);

// Description of the most recent error on this thread, or NULL if none.
// Valid until the next failing call on the same thread; do not free.
const char *sk_last_error_message(void);

// Release a string returned through a `char**` out-parameter.
//
// # Safety
// `ptr` must have been produced by this library and not yet freed.
void sk_string_free(char *ptr);

// Sampled-label-1 probability under an active key: 2(1 + delta)/(4 + delta).
//
// # Safety
// All pointer arguments must be valid for the duration of the call;
// `const char*` arguments must be NUL-terminated strings. NULL is
// checked and reported as a status, any other invalid pointer is
// undefined behavior, as in any C API.
enum SkStatus sk_p_w(double delta, double *out);

// Covertext length needed to decode `n_bits` with overall error `epsilon`.
//
// # Safety
// All pointer arguments must be valid for the duration of the call;
// `const char*` arguments must be NUL-terminated strings. NULL is
// checked and reported as a status, any other invalid pointer is
// undefined behavior, as in any C API.
enum SkStatus sk_required_length(uint32_t n_bits,
                                 double delta,
                                 double epsilon,
                                 double safety_factor,
                                 uint64_t *out);

// Inverse standard normal CDF.
//
// # Safety
// All pointer arguments must be valid for the duration of the call;
// `const char*` arguments must be NUL-terminated strings. NULL is
// checked and reported as a status, any other invalid pointer is
// undefined behavior, as in any C API.
enum SkStatus sk_inverse_normal_cdf(double p, double *out);

// Load a codec profile from a JSON file.
//
// # Safety
// All pointer arguments must be valid for the duration of the call;
// `const char*` arguments must be NUL-terminated strings. NULL is
// checked and reported as a status, any other invalid pointer is
// undefined behavior, as in any C API.
enum SkStatus sk_profile_load(const char *path, struct SkProfile **out);

// Release a profile handle.
//
// # Safety
// `profile` must come from [`sk_profile_load`] and not be used afterwards.
void sk_profile_free(struct SkProfile *profile);

// Encode `message_bits` (a string like "101") with the watermark codec.
// On success `*out_doc_json` holds the stego document as JSON.
//
// # Safety
// All pointer arguments must be valid for the duration of the call;
// `const char*` arguments must be NUL-terminated strings. NULL is
// checked and reported as a status, any other invalid pointer is
// undefined behavior, as in any C API.
enum SkStatus sk_watermark_encode(const struct SkProfile *profile,
                                  const char *key_hex,
                                  const char *message_bits,
                                  const char *history_json,
                                  uint64_t seed,
                                  char **out_doc_json);

// Decode a watermark stego document (JSON, as produced by
// [`sk_watermark_encode`]). On success `*out_bits` holds the message bits.
//
// # Safety
// All pointer arguments must be valid for the duration of the call;
// `const char*` arguments must be NUL-terminated strings. NULL is
// checked and reported as a status, any other invalid pointer is
// undefined behavior, as in any C API.
enum SkStatus sk_watermark_decode(const struct SkProfile *profile,
                                  const char *key_hex,
                                  const char *doc_json,
                                  const char *history_json,
                                  char **out_bits);

// Encode `message_bits` with the embedding codec (error correction and
// hash model come from the profile). `*out_doc_json` holds the document.
//
// # Safety
// All pointer arguments must be valid for the duration of the call;
// `const char*` arguments must be NUL-terminated strings. NULL is
// checked and reported as a status, any other invalid pointer is
// undefined behavior, as in any C API.
enum SkStatus sk_embed_encode(const struct SkProfile *profile,
                              const char *message_bits,
                              const char *history_json,
                              uint64_t seed,
                              char **out_doc_json);

// Decode covertext produced by the embedding codec. `text` may be either
// a stego-document JSON or raw covertext; it is treated as raw covertext.
//
// # Safety
// All pointer arguments must be valid for the duration of the call;
// `const char*` arguments must be NUL-terminated strings. NULL is
// checked and reported as a status, any other invalid pointer is
// undefined behavior, as in any C API.
enum SkStatus sk_embed_decode(const struct SkProfile *profile, const char *text, char **out_bits);

// Tamper with text. `kind` is one of "ngram_shuffle", "synonym",
// "paraphrase"; `mode` is "local" or "global". The synonym attack needs
// `lexicon_path`; other attacks pass NULL.
//
// # Safety
// All pointer arguments must be valid for the duration of the call;
// `const char*` arguments must be NUL-terminated strings. NULL is
// checked and reported as a status, any other invalid pointer is
// undefined behavior, as in any C API.
enum SkStatus sk_attack_text(const char *kind,
                             const char *mode,
                             double fraction,
                             uint32_t ngram,
                             const char *lexicon_path,
                             uint64_t seed,
                             const char *text,
                             char **out_text);

// Fraction of the original's k-word windows that survive in the tampered
// text.
//
// # Safety
// All pointer arguments must be valid for the duration of the call;
// `const char*` arguments must be NUL-terminated strings. NULL is
// checked and reported as a status, any other invalid pointer is
// undefined behavior, as in any C API.
enum SkStatus sk_local_consistency(const char *original,
                                   const char *tampered,
                                   uint32_t k,
                                   double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* STEGOKIT_H */

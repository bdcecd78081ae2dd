#ifndef LAR_H
#define LAR_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes shared by every entry point.
 */
typedef enum LarStatus {
  LAR_STATUS_OK = 0,
  LAR_STATUS_NULL_POINTER = 1,
  LAR_STATUS_INVALID_UTF8 = 2,
  LAR_STATUS_NOT_FOUND = 3,
  LAR_STATUS_IO = 4,
  LAR_STATUS_PARSE = 5,
  LAR_STATUS_INVALID_CONFIG = 6,
  LAR_STATUS_INVALID_INPUT = 7,
  LAR_STATUS_INCOMPATIBLE = 8,
  LAR_STATUS_OUT_OF_RANGE = 9,
  LAR_STATUS_PANIC = 10,
} LarStatus;

typedef enum LarTokenizer {
  LAR_TOKENIZER_WORDS = 0,
  LAR_TOKENIZER_WORDS_PLUS_HTML = 1,
} LarTokenizer;

/**
 * A loaded trajectory corpus.
 */
typedef struct LarCorpus LarCorpus;

/**
 * A latent action vocabulary.
 */
typedef struct LarVocab LarVocab;

/**
 * Identification thresholds and tokenizer.
 */
typedef struct LarMinerConfig {
  uint32_t n_lo;
  uint32_t n_hi;
  uint64_t f_min;
  double h_max;
  uint64_t k;
  double rho;
  enum LarTokenizer tokenizer;
} LarMinerConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null if none.
 * The pointer stays valid until the next failing call on the same thread.
 */
const char *lar_last_error_message(void);

/**
 * Library version as a static nul-terminated string.
 */
const char *lar_version(void);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void lar_string_free(char *s);

/**
 * Fills `out` with a named built-in preset.
 *
 * # Safety
 * `name` must be a nul-terminated string; `out` must be writable.
 */
enum LarStatus lar_config_preset(const char *name, struct LarMinerConfig *out);

/**
 * Loads a JSON-lines trajectory corpus.
 *
 * # Safety
 * `path` must be a nul-terminated string; `out` must be writable.
 */
enum LarStatus lar_corpus_load(const char *path,
                               enum LarTokenizer tokenizer,
                               struct LarCorpus **out);

/**
 * Number of trajectories in the corpus.
 *
 * # Safety
 * `corpus` must be a live handle; `out` must be writable.
 */
enum LarStatus lar_corpus_len(const struct LarCorpus *corpus, uint64_t *out);

/**
 * Total number of action tokens across the corpus.
 *
 * # Safety
 * `corpus` must be a live handle; `out` must be writable.
 */
enum LarStatus lar_corpus_effective_horizon(const struct LarCorpus *corpus, uint64_t *out);

/**
 * Releases a corpus handle. Null is ignored.
 *
 * # Safety
 * `corpus` must come from [`lar_corpus_load`] and not have been freed.
 */
void lar_corpus_free(struct LarCorpus *corpus);

/**
 * Mines a latent action vocabulary from `corpus`.
 *
 * The corpus keeps the tokenizer it was loaded with; `config.tokenizer` is
 * recorded in the vocabulary and must match it.
 *
 * # Safety
 * Pointers must be valid; `out` must be writable.
 */
enum LarStatus lar_identify(const struct LarCorpus *corpus,
                            const struct LarMinerConfig *config,
                            struct LarVocab **out);

/**
 * Loads a vocabulary file.
 *
 * # Safety
 * `path` must be a nul-terminated string; `out` must be writable.
 */
enum LarStatus lar_vocab_load(const char *path, struct LarVocab **out);

/**
 * Writes a vocabulary file.
 *
 * # Safety
 * `vocab` must be a live handle; `path` must be a nul-terminated string.
 */
enum LarStatus lar_vocab_save(const struct LarVocab *vocab, const char *path);

/**
 * Number of latent actions.
 *
 * # Safety
 * `vocab` must be a live handle; `out` must be writable.
 */
enum LarStatus lar_vocab_len(const struct LarVocab *vocab, uint64_t *out);

/**
 * New handle holding the first `k` latent actions.
 *
 * # Safety
 * `vocab` must be a live handle; `out` must be writable.
 */
enum LarStatus lar_vocab_prefix(const struct LarVocab *vocab, uint64_t k, struct LarVocab **out);

/**
 * Latent symbol of the action at `rank`. Free the result with [`lar_string_free`].
 *
 * # Safety
 * `vocab` must be a live handle; `out` must be writable.
 */
enum LarStatus lar_vocab_symbol(const struct LarVocab *vocab, uint64_t rank, char **out);

/**
 * Space-joined words of the segment at `rank`. Free the result with [`lar_string_free`].
 *
 * # Safety
 * `vocab` must be a live handle; `out` must be writable.
 */
enum LarStatus lar_vocab_segment(const struct LarVocab *vocab, uint64_t rank, char **out);

/**
 * Releases a vocabulary handle. Null is ignored.
 *
 * # Safety
 * `vocab` must come from this library and not have been freed.
 */
void lar_vocab_free(struct LarVocab *vocab);

/**
 * Compresses every trajectory and reports the reparameterization rate.
 * A nonzero `allow_cross_corpus` accepts vocabularies mined elsewhere.
 *
 * # Safety
 * Handles must be live; `out` must be writable.
 */
enum LarStatus lar_compress_rate(const struct LarCorpus *corpus,
                                 const struct LarVocab *vocab,
                                 int32_t allow_cross_corpus,
                                 double *out);

/**
 * Shannon entropy in bits of a successor count vector.
 *
 * # Safety
 * `counts` must point to `len` readable values; `out` must be writable.
 */
enum LarStatus lar_entropy_bits(const uint64_t *counts, size_t len, double *out);

/**
 * Mean KL divergence in nats between row-major `rows x cols` teacher and
 * student logits at the given temperature.
 *
 * # Safety
 * `teacher` and `student` must each point to `rows * cols` readable values;
 * `out` must be writable.
 */
enum LarStatus lar_kl_distill_loss(const double *teacher,
                                   const double *student,
                                   size_t rows,
                                   size_t cols,
                                   double temperature,
                                   double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LAR_H */

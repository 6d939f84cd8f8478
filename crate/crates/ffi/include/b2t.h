#ifndef B2T_H
#define B2T_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes.
 */
typedef enum B2tStatus {
  B2T_OK = 0,
  B2T_ERR_NULL_POINTER = 1,
  B2T_ERR_INVALID_ARGUMENT = 2,
  B2T_ERR_IO = 3,
  B2T_ERR_PARSE = 4,
  B2T_ERR_SHAPE = 5,
  B2T_ERR_NOT_A_DISTRIBUTION = 6,
  B2T_ERR_NUMERICAL = 7,
  B2T_ERR_EMPTY_BEAM = 8,
  B2T_ERR_PANIC = 98,
  B2T_ERR_OTHER = 99,
} B2tStatus;

/**
 * Lexicon trie, language model and beam settings.
 */
typedef struct B2tDecoder B2tDecoder;

/**
 * Back-off n-gram language model.
 */
typedef struct B2tLm B2tLm;

/**
 * Trained decoder checkpoint.
 */
typedef struct B2tModel B2tModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread. Valid until the next call.
 */
const char *b2t_last_error(void);

/**
 * Library version as a static string.
 */
const char *b2t_version(void);

/**
 * # Safety
 * `s` must come from this library or be null.
 */
void b2t_string_free(char *s);

/**
 * Loads an ARPA file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum B2tStatus b2t_lm_load(const char *path, struct B2tLm **out);

/**
 * log10 probability of a sentence (with `<s>`/`</s>`).
 *
 * # Safety
 * `lm` must be a live handle, `text` a NUL-terminated string, `out` writable.
 */
enum B2tStatus b2t_lm_sentence_logprob(const struct B2tLm *lm, const char *text, double *out);

/**
 * # Safety
 * `lm` must come from `b2t_lm_load` or be null.
 */
void b2t_lm_free(struct B2tLm *lm);

/**
 * Marginalizes one diphone log-probability frame (1601 values) into phoneme
 * log-probabilities (41 values).
 *
 * # Safety
 * `frame` must hold 1601 doubles and `out` room for 41.
 */
enum B2tStatus b2t_marginalize_diphones(const double *frame, double *out);

/**
 * Pooled word error rate over `n` reference/hypothesis pairs.
 *
 * # Safety
 * `refs` and `hyps` must each point to `n` NUL-terminated strings.
 */
enum B2tStatus b2t_word_error_rate(const char *const *refs,
                                   const char *const *hyps,
                                   uintptr_t n,
                                   double *out);

/**
 * Loads a decoder checkpoint.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum B2tStatus b2t_model_load(const char *path, struct B2tModel **out);

/**
 * Feature dimension the model expects per frame.
 *
 * # Safety
 * `model` must be a live handle.
 */
uintptr_t b2t_model_feature_dim(const struct B2tModel *model);

/**
 * # Safety
 * `model` must come from `b2t_model_load` or be null.
 */
void b2t_model_free(struct B2tModel *model);

/**
 * Builds a beam decoder from a lexicon file and an ARPA file.
 *
 * # Safety
 * Paths must be NUL-terminated strings; `out` must be writable.
 */
enum B2tStatus b2t_decoder_new(const char *lexicon_path,
                               const char *lm_path,
                               double alpha,
                               double beta,
                               uintptr_t beam_width,
                               struct B2tDecoder **out);

/**
 * # Safety
 * `decoder` must come from `b2t_decoder_new` or be null.
 */
void b2t_decoder_free(struct B2tDecoder *decoder);

/**
 * Decodes a row-major `frames x dim` feature matrix to the best transcript.
 * The returned string must be released with `b2t_string_free`.
 *
 * # Safety
 * Handles must be live; `features` must hold `frames * dim` doubles.
 */
enum B2tStatus b2t_decode(const struct B2tDecoder *decoder,
                          const struct B2tModel *model,
                          const double *features,
                          uintptr_t frames,
                          uintptr_t dim,
                          char **out_text);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* B2T_H */

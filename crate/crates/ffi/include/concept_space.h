#ifndef CONCEPT_SPACE_H
#define CONCEPT_SPACE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CsStatus {
  CS_STATUS_OK = 0,
  CS_STATUS_NULL_POINTER = 1,
  CS_STATUS_INVALID_UTF8 = 2,
  CS_STATUS_DOMAIN = 3,
  CS_STATUS_FORMAT = 4,
  CS_STATUS_VERSION = 5,
  CS_STATUS_CONFIG = 6,
  CS_STATUS_UNKNOWN_CONCEPT = 7,
  CS_STATUS_OUT_OF_RANGE = 8,
  CS_STATUS_IO = 9,
  CS_STATUS_BUFFER_TOO_SMALL = 10,
  CS_STATUS_PANIC = 11,
  CS_STATUS_INTERNAL = 12,
} CsStatus;

/**
 * A loaded projection encoder.
 */
typedef struct CsEncoder CsEncoder;

/**
 * A loaded concept space.
 */
typedef struct CsSpace CsSpace;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. The pointer stays
 * valid until the next call into this library on the same thread.
 */
const char *cs_last_error_message(void);

/**
 * Load a concept space file into `*out`.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a writable pointer.
 */
enum CsStatus cs_space_load(const char *path, struct CsSpace **out);

/**
 * # Safety
 * `space` must come from [`cs_space_load`] and not be freed twice. NULL is ignored.
 */
void cs_space_free(struct CsSpace *space);

/**
 * Number of concepts; 0 for NULL.
 *
 * # Safety
 * `space` must be NULL or a live handle.
 */
size_t cs_space_num_concepts(const struct CsSpace *space);

/**
 * Box dimension; 0 for NULL.
 *
 * # Safety
 * `space` must be NULL or a live handle.
 */
size_t cs_space_dim(const struct CsSpace *space);

/**
 * Index of the concept called `name`.
 *
 * # Safety
 * Pointers must be valid; `name` NUL-terminated.
 */
enum CsStatus cs_space_concept_index(const struct CsSpace *space, const char *name, uint32_t *out);

/**
 * `P(concept | given)` by concept name.
 *
 * # Safety
 * Pointers must be valid; names NUL-terminated.
 */
enum CsStatus cs_space_entailment(const struct CsSpace *space,
                                  const char *concept,
                                  const char *given,
                                  double *out);

/**
 * `P(concept | given)` by concept index.
 *
 * # Safety
 * Pointers must be valid.
 */
enum CsStatus cs_space_entailment_index(const struct CsSpace *space,
                                        uint32_t concept,
                                        uint32_t given,
                                        double *out);

/**
 * Load an encoder file into `*out`.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a writable pointer.
 */
enum CsStatus cs_encoder_load(const char *path, struct CsEncoder **out);

/**
 * # Safety
 * `encoder` must come from [`cs_encoder_load`] and not be freed twice. NULL is ignored.
 */
void cs_encoder_free(struct CsEncoder *encoder);

/**
 * Output box dimension; 0 for NULL.
 *
 * # Safety
 * `encoder` must be NULL or a live handle.
 */
size_t cs_encoder_dim(const struct CsEncoder *encoder);

/**
 * Project a feature vector; writes `dim` values to each output buffer.
 *
 * # Safety
 * `features` must point to `n_features` doubles and each output buffer to
 * `out_len` writable doubles.
 */
enum CsStatus cs_encode_vision(const struct CsEncoder *encoder,
                               const double *features,
                               size_t n_features,
                               double *out_min,
                               double *out_delta,
                               size_t out_len);

/**
 * Project a sentence; writes `dim` values to each output buffer.
 *
 * # Safety
 * `text` must be NUL-terminated and each output buffer hold `out_len` doubles.
 */
enum CsStatus cs_encode_text(const struct CsEncoder *encoder,
                             const char *text,
                             double *out_min,
                             double *out_delta,
                             size_t out_len);

/**
 * Image-text matching score of a feature vector and a sentence.
 *
 * # Safety
 * Handles must be live, `features` must point to `n_features` doubles and
 * `text` be NUL-terminated.
 */
enum CsStatus cs_itm_score(const struct CsSpace *space,
                           const struct CsEncoder *vision,
                           const struct CsEncoder *text_encoder,
                           const double *features,
                           size_t n_features,
                           const char *text,
                           double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CONCEPT_SPACE_H */

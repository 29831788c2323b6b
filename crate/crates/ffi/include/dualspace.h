#ifndef DUALSPACE_H
#define DUALSPACE_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stddef.h>
#include <stdint.h>

/*
 Result code of every fallible call.
 */
typedef enum DsStatus {
  DS_STATUS_OK = 0,
  DS_STATUS_NULL_POINTER = 1,
  DS_STATUS_INVALID_UTF8 = 2,
  DS_STATUS_IO = 3,
  DS_STATUS_FORMAT = 4,
  DS_STATUS_OUT_OF_VOCABULARY = 5,
  DS_STATUS_INVALID_ARGUMENT = 6,
  DS_STATUS_UNDEFINED_COSINE = 7,
  DS_STATUS_NOT_ENOUGH_DATA = 8,
  DS_STATUS_BUFFER_TOO_SMALL = 9,
  DS_STATUS_PANIC = 10,
  DS_STATUS_INTERNAL = 11,
} DsStatus;

/*
 Which spaces the cue and the candidates are read from.
 */
typedef enum DsCompareMethod {
  DS_COMPARE_METHOD_WW = 0,
  DS_COMPARE_METHOD_WC = 1,
  DS_COMPARE_METHOD_CW = 2,
  DS_COMPARE_METHOD_CC = 3,
  DS_COMPARE_METHOD_SS = 4,
  DS_COMPARE_METHOD_AA = 5,
} DsCompareMethod;

/*
 Opaque embedding handle.
 */
typedef struct DsEmbedding DsEmbedding;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Library version as a static NUL-terminated string.
 */
const char *ds_version(void);

/*
 Message of the last failed call on this thread, or null. The pointer
 stays valid until the next call into the library from the same thread.
 */
const char *ds_last_error_message(void);

/*
 Loads an embedding file. On success `*out` owns a handle that must be
 released with [`ds_embedding_free`].

 # Safety
 `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum DsStatus ds_embedding_load(const char *path, struct DsEmbedding **out);

/*
 Releases a handle. Null is ignored.

 # Safety
 `emb` must come from [`ds_embedding_load`] and not be used afterwards.
 */
void ds_embedding_free(struct DsEmbedding *emb);

/*
 Number of vocabulary entries, 0 for a null handle.

 # Safety
 `emb` must be null or a live handle.
 */
uintptr_t ds_embedding_vocab_size(const struct DsEmbedding *emb);

/*
 Vector dimension, 0 for a null handle.

 # Safety
 `emb` must be null or a live handle.
 */
uintptr_t ds_embedding_dim(const struct DsEmbedding *emb);

/*
 Looks up the id of `token`.

 # Safety
 Pointers must be valid; `token` NUL-terminated.
 */
enum DsStatus ds_embedding_token_id(const struct DsEmbedding *emb,
                                    const char *token,
                                    uint32_t *out_id);

/*
 Copies token `id` into `buf` as a NUL-terminated string. `*out_len`
 receives the token length in bytes without the terminator, also when the
 buffer is too small.

 # Safety
 `buf` must hold `buf_len` bytes (it may be null when `buf_len` is 0).
 */
enum DsStatus ds_embedding_token(const struct DsEmbedding *emb,
                                 uint32_t id,
                                 char *buf,
                                 uintptr_t buf_len,
                                 uintptr_t *out_len);

/*
 `cm` takes a [`DsCompareMethod`] value in this and every other call.

 Cosine of `a` read from the cue space and `b` from the candidate space.

 # Safety
 Pointers must be valid; strings NUL-terminated.
 */
enum DsStatus ds_similarity(const struct DsEmbedding *emb,
                            uint32_t cm,
                            const char *a,
                            const char *b,
                            double *out);

/*
 Top-`n` neighbors of `cue` (the cue itself excluded), best first. Writes
 up to `n` ids and scores and their count to `*out_count`.

 # Safety
 `out_ids` and `out_scores` must each hold `n` elements.
 */
enum DsStatus ds_nearest(const struct DsEmbedding *emb,
                         uint32_t cm,
                         const char *cue,
                         uintptr_t n,
                         uint32_t *out_ids,
                         double *out_scores,
                         uintptr_t *out_count);

/*
 Pearson correlation against a canonical similarity TSV.

 # Safety
 Pointers must be valid; `dataset_path` NUL-terminated.
 */
enum DsStatus ds_eval_similarity(const struct DsEmbedding *emb,
                                 uint32_t cm,
                                 const char *dataset_path,
                                 double *out_value);

/*
 Mean of hit ratio and coverage on a canonical association TSV. `n` is
 the neighbor list length; 0 selects the default of 10.

 # Safety
 Pointers must be valid; `dataset_path` NUL-terminated.
 */
enum DsStatus ds_eval_association(const struct DsEmbedding *emb,
                                  uint32_t cm,
                                  const char *dataset_path,
                                  uintptr_t n,
                                  double *out_value);

/*
 Fraction of analogy questions answered within the top `top_n`
 candidates; 0 selects the default of 3. Accepts canonical TSV or the
 Google format.

 # Safety
 Pointers must be valid; `dataset_path` NUL-terminated.
 */
enum DsStatus ds_eval_analogy(const struct DsEmbedding *emb,
                              uint32_t cm,
                              const char *dataset_path,
                              uintptr_t top_n,
                              double *out_value);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DUALSPACE_H */

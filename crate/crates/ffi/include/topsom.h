#ifndef TOPSOM_H
#define TOPSOM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every call.
 */
typedef enum TopsomStatus {
  TOPSOM_STATUS_OK = 0,
  TOPSOM_STATUS_NULL_POINTER = 1,
  TOPSOM_STATUS_INVALID_ARGUMENT = 2,
  TOPSOM_STATUS_IO = 3,
  TOPSOM_STATUS_PARSE = 4,
  TOPSOM_STATUS_DIMENSION_MISMATCH = 5,
  TOPSOM_STATUS_CORRUPT_FILE = 6,
  TOPSOM_STATUS_CONFIG = 7,
  TOPSOM_STATUS_TRAINING = 8,
  TOPSOM_STATUS_TIMEOUT = 9,
  TOPSOM_STATUS_BUFFER_TOO_SMALL = 10,
  TOPSOM_STATUS_PANIC = 11,
} TopsomStatus;

/**
 * Row-major sample matrix.
 */
typedef struct TopsomData TopsomData;

/**
 * Trained map.
 */
typedef struct TopsomModel TopsomModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *topsom_last_error_message(void);

/**
 * Copies `n_rows × n_cols` row-major values into a new data handle.
 *
 * # Safety
 * `values` must point to `n_rows * n_cols` floats; `out` must be writable.
 */
enum TopsomStatus topsom_data_from_values(const float *values,
                                          size_t n_rows,
                                          size_t n_cols,
                                          struct TopsomData **out);

/**
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum TopsomStatus topsom_data_from_csv(const char *path, bool has_header, struct TopsomData **out);

/**
 * Two noisy concentric circles in 2-D.
 *
 * # Safety
 * `out` must be writable.
 */
enum TopsomStatus topsom_data_synth_rings(size_t n_rows,
                                          double noise,
                                          uint64_t seed,
                                          struct TopsomData **out);

/**
 * Uniform values in `[0, 1)`.
 *
 * # Safety
 * `out` must be writable.
 */
enum TopsomStatus topsom_data_synth_uniform(size_t n_rows,
                                            size_t n_cols,
                                            uint64_t seed,
                                            struct TopsomData **out);

/**
 * # Safety
 * `data` must be a live handle or NULL.
 */
size_t topsom_data_n_rows(const struct TopsomData *data);

/**
 * # Safety
 * `data` must be a live handle or NULL.
 */
size_t topsom_data_n_cols(const struct TopsomData *data);

/**
 * # Safety
 * `data` must come from a `topsom_data_*` constructor and not be used afterwards.
 */
void topsom_data_free(struct TopsomData *data);

/**
 * Trains on every row of `data`. `config_text` uses the run-config format
 * (`key = value` lines or JSON); its map, schedule, sampling and worker settings
 * apply, while dataset, split and output keys are ignored. NULL means defaults.
 *
 * # Safety
 * `data` must be live; `config_text` NULL or NUL-terminated; `out` writable.
 */
enum TopsomStatus topsom_train(const struct TopsomData *data,
                               const char *config_text,
                               struct TopsomModel **out);

/**
 * # Safety
 * `path` must be NUL-terminated; `out` writable.
 */
enum TopsomStatus topsom_model_load(const char *path, struct TopsomModel **out);

/**
 * # Safety
 * `model` must be live; `path` NUL-terminated.
 */
enum TopsomStatus topsom_model_save(const struct TopsomModel *model, const char *path);

/**
 * # Safety
 * `model` must be a live handle or NULL.
 */
size_t topsom_model_n_nodes(const struct TopsomModel *model);

/**
 * # Safety
 * `model` must be a live handle or NULL.
 */
size_t topsom_model_dim(const struct TopsomModel *model);

/**
 * Copies the `n_nodes × dim` weights into `out` (capacity `len` floats).
 *
 * # Safety
 * `model` must be live; `out` must hold `len` floats.
 */
enum TopsomStatus topsom_model_weights(const struct TopsomModel *model, float *out, size_t len);

/**
 * Mean distance from each row of `data` to its best-matching node.
 *
 * # Safety
 * `model` and `data` must be live; `out` writable.
 */
enum TopsomStatus topsom_model_quantization_error(const struct TopsomModel *model,
                                                  const struct TopsomData *data,
                                                  double *out);

/**
 * Best-matching node and distance per row. Both arrays need `n_rows` slots.
 *
 * # Safety
 * `model` and `data` must be live; `bmus` and `distances` must hold `len` items.
 */
enum TopsomStatus topsom_model_map(const struct TopsomModel *model,
                                   const struct TopsomData *data,
                                   uint32_t *bmus,
                                   double *distances,
                                   size_t len);

/**
 * # Safety
 * `model` must come from `topsom_train` or `topsom_model_load` and not be used
 * afterwards.
 */
void topsom_model_free(struct TopsomModel *model);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TOPSOM_H */

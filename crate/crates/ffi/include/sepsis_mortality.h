#ifndef SEPSIS_MORTALITY_H
#define SEPSIS_MORTALITY_H

/* This file is generated by cbindgen from sepsis-mortality-ffi; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes mirroring the CLI exit codes.
 */
typedef enum SmStatus {
  SM_STATUS_OK = 0,
  /**
   * configuration problem (bad file, bad value)
   */
  SM_STATUS_CONFIG = 2,
  /**
   * data or schema problem (missing file, malformed table)
   */
  SM_STATUS_DATA = 3,
  /**
   * training/evaluation/orchestration failure
   */
  SM_STATUS_PIPELINE = 4,
  /**
   * a required pointer argument was null
   */
  SM_STATUS_NULL_ARG = 5,
  /**
   * a string argument was not valid UTF-8
   */
  SM_STATUS_UTF8 = 6,
} SmStatus;

/**
 * Opaque handle to a trained model.
 */
typedef struct SmModel SmModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *sm_version(void);

/**
 * Message of the last error raised on this thread; valid until the next
 * failing call on the same thread. Never null.
 */
const char *sm_last_error_message(void);

/**
 * Runs the full pipeline. `config_path` may be null (defaults apply);
 * `data_dir` and `out_dir` override the config when non-null. Pass
 * `seed = UINT64_MAX` to keep the config's seed.
 *
 * # Safety
 * All pointer arguments must be null or valid NUL-terminated strings.
 */
enum SmStatus sm_run_pipeline(const char *config_path,
                              const char *data_dir,
                              const char *out_dir,
                              uint64_t seed);

/**
 * Generates a synthetic dataset into `out_dir` using the `[synth]`
 * block of the config (or defaults when `config_path` is null). Pass
 * `seed = UINT64_MAX` to keep the config's seed.
 *
 * # Safety
 * Pointer arguments must be null or valid NUL-terminated strings;
 * `out_dir` must not be null.
 */
enum SmStatus sm_generate_synthetic(const char *config_path, const char *out_dir, uint64_t seed);

/**
 * Loads a model JSON written by the pipeline's train stage. Returns
 * null on failure (see [`sm_last_error_message`]).
 *
 * # Safety
 * `path` must be a valid NUL-terminated string.
 */
struct SmModel *sm_model_load(const char *path);

/**
 * Number of features the model expects per row.
 *
 * # Safety
 * `model` must be a live handle from [`sm_model_load`].
 */
uintptr_t sm_model_feature_count(const struct SmModel *model);

/**
 * Scores `n_rows` rows of `n_cols` row-major features into
 * `out_scores` (length `n_rows`). Scores are probabilities in [0,1].
 *
 * # Safety
 * `model` must be a live handle; `features` must point to
 * `n_rows * n_cols` readable doubles; `out_scores` to `n_rows`
 * writable doubles.
 */
enum SmStatus sm_model_predict(const struct SmModel *model,
                               const double *features,
                               uintptr_t n_rows,
                               uintptr_t n_cols,
                               double *out_scores);

/**
 * Releases a model handle. Null is a no-op.
 *
 * # Safety
 * `model` must be null or a handle from [`sm_model_load`] not yet freed.
 */
void sm_model_free(struct SmModel *model);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* SEPSIS_MORTALITY_H */

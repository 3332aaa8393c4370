#ifndef ANOMALENS_H
#define ANOMALENS_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum AnomalensStatus {
  ANOMALENS_STATUS_OK = 0,
  ANOMALENS_STATUS_NULL_POINTER = 1,
  ANOMALENS_STATUS_INVALID_ARGUMENT = 2,
  ANOMALENS_STATUS_IO = 3,
  ANOMALENS_STATUS_FORMAT = 4,
  ANOMALENS_STATUS_DIMENSION_MISMATCH = 5,
  ANOMALENS_STATUS_NUMERICAL = 6,
  /**
   * The model has no anomaly threshold (PCA baselines).
   */
  ANOMALENS_STATUS_NO_THRESHOLD = 7,
  /**
   * A Rust panic was caught at the boundary.
   */
  ANOMALENS_STATUS_INTERNAL = 8,
} AnomalensStatus;

/**
 * Opaque model handle.
 */
typedef struct AnomalensModel AnomalensModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Loads a model file written by `anomalens train`.
 *
 * # Safety
 * `path` must be a nul-terminated string; `out` must be writable.
 */
enum AnomalensStatus anomalens_model_load(const char *path, struct AnomalensModel **out);

/**
 * Releases a handle. Null is ignored.
 *
 * # Safety
 * `model` must come from [`anomalens_model_load`] and not be used afterwards.
 */
void anomalens_model_free(struct AnomalensModel *model);

/**
 * Number of values in one record (all types concatenated).
 *
 * # Safety
 * `model` must be a live handle; `out` must be writable.
 */
enum AnomalensStatus anomalens_model_input_dim(const struct AnomalensModel *model, size_t *out);

/**
 * Number of data types: 1 unless the model is multimodal.
 *
 * # Safety
 * `model` must be a live handle; `out` must be writable.
 */
enum AnomalensStatus anomalens_model_type_count(const struct AnomalensModel *model, size_t *out);

/**
 * Anomaly threshold on the score.
 *
 * # Safety
 * `model` must be a live handle; `out` must be writable.
 */
enum AnomalensStatus anomalens_model_threshold(const struct AnomalensModel *model, double *out);

/**
 * Reconstruction score of one record: MSE, weighted MSE, or PCA residual.
 *
 * # Safety
 * `x` must point to `len` doubles; `out` must be writable.
 */
enum AnomalensStatus anomalens_score(const struct AnomalensModel *model,
                                     const double *x,
                                     size_t len,
                                     double *out);

/**
 * Score plus the strict `score > threshold` decision.
 *
 * # Safety
 * `x` must point to `len` doubles; `out_score` may be null, `out_anomalous` must be writable.
 */
enum AnomalensStatus anomalens_is_anomalous(const struct AnomalensModel *model,
                                            const double *x,
                                            size_t len,
                                            double *out_score,
                                            bool *out_anomalous);

/**
 * Contribution degree per input value (default solver settings).
 *
 * `eta` receives `len` values in normalized units. `out_lambda` may be null.
 *
 * # Safety
 * `x` must point to `len` doubles and `eta` to `len` writable doubles.
 */
enum AnomalensStatus anomalens_explain(const struct AnomalensModel *model,
                                       const double *x,
                                       size_t len,
                                       double *eta,
                                       double *out_lambda);

/**
 * Message for the last failed call on this thread, or null.
 *
 * The pointer stays valid until the next failing call on the same thread.
 */
const char *anomalens_last_error(void);

/**
 * Library version as a static string.
 */
const char *anomalens_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ANOMALENS_H */

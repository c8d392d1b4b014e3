#ifndef SSQDA_H
#define SSQDA_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes.
 */
enum SsqdaStatus
#if defined(__cplusplus) || __STDC_VERSION__ >= 202311L
  : int32_t
#endif // defined(__cplusplus) || __STDC_VERSION__ >= 202311L
 {
  SSQDA_STATUS_OK = 0,
  SSQDA_STATUS_NULL_POINTER = 1,
  SSQDA_STATUS_INVALID_ARGUMENT = 2,
  SSQDA_STATUS_DIMENSION_MISMATCH = 3,
  SSQDA_STATUS_CONVERGENCE = 4,
  SSQDA_STATUS_INFEASIBLE = 5,
  SSQDA_STATUS_DEGENERATE = 6,
  SSQDA_STATUS_NUMERICAL = 7,
  SSQDA_STATUS_FORMAT = 8,
  SSQDA_STATUS_PANIC = 9,
};
#ifndef __cplusplus
#if __STDC_VERSION__ >= 202311L
typedef enum SsqdaStatus SsqdaStatus;
#else
typedef int32_t SsqdaStatus;
#endif // __STDC_VERSION__ >= 202311L
#endif // __cplusplus

/**
 * Classification methods.
 */
enum SsqdaMethod
#if defined(__cplusplus) || __STDC_VERSION__ >= 202311L
  : int32_t
#endif // defined(__cplusplus) || __STDC_VERSION__ >= 202311L
 {
  SSQDA_METHOD_SSQDA = 0,
  SSQDA_METHOD_SDAR = 1,
  SSQDA_METHOD_SLDA = 2,
  SSQDA_METHOD_RIDGE_LDA = 3,
  SSQDA_METHOD_RIDGE_QDA = 4,
};
#ifndef __cplusplus
#if __STDC_VERSION__ >= 202311L
typedef enum SsqdaMethod SsqdaMethod;
#else
typedef int32_t SsqdaMethod;
#endif // __STDC_VERSION__ >= 202311L
#endif // __cplusplus

/**
 * A fitted binary classifier.
 */
typedef struct SsqdaModel SsqdaModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the most recent failure on this thread, or NULL. The pointer
 * stays valid until the next call into this library from the same thread.
 */
const char *ssqda_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *ssqda_version(void);

/**
 * Fits `method` (an `SSQDA_METHOD_*` code) at fixed tuning levels.
 * `lambda1` is used by SSQDA and SDAR, `lambda2` by SSQDA, SDAR and SLDA;
 * the ridge baselines ignore both.
 *
 * # Safety
 * `x1` and `x2` must point to `n1 * p` and `n2 * p` readable doubles and
 * `out` must be writable.
 */
SsqdaStatus ssqda_fit(int32_t method,
                      const double *x1,
                      size_t n1,
                      const double *x2,
                      size_t n2,
                      size_t p,
                      double lambda1,
                      double lambda2,
                      struct SsqdaModel **out);

/**
 * Fits `method` (an `SSQDA_METHOD_*` code) with tuning levels chosen by
 * stratified `folds`-fold cross-validation over the default grid. Same seed,
 * same model.
 *
 * # Safety
 * As for [`ssqda_fit`].
 */
SsqdaStatus ssqda_fit_tuned(int32_t method,
                            const double *x1,
                            size_t n1,
                            const double *x2,
                            size_t n2,
                            size_t p,
                            size_t folds,
                            uint64_t seed,
                            struct SsqdaModel **out);

/**
 * Releases a model. NULL is ignored.
 *
 * # Safety
 * `model` must come from this library and not be used afterwards.
 */
void ssqda_model_free(struct SsqdaModel *model);

/**
 * # Safety
 * `model` must be a live handle and `out` writable.
 */
SsqdaStatus ssqda_model_dim(const struct SsqdaModel *model, size_t *out);

/**
 * # Safety
 * `model` must be a live handle and `out` writable.
 */
SsqdaStatus ssqda_model_method(const struct SsqdaModel *model, SsqdaMethod *out);

/**
 * Discriminant value at one point; positive means class 1.
 *
 * # Safety
 * `z` must point to `p` readable doubles and `out` must be writable.
 */
SsqdaStatus ssqda_model_score(const struct SsqdaModel *model,
                              const double *z,
                              size_t p,
                              double *out);

/**
 * Labels (1 or 2) for the `n` rows of a row-major `n × p` buffer.
 *
 * # Safety
 * `x` must point to `n * p` readable doubles and `labels` to `n` writable
 * `uint32_t`.
 */
SsqdaStatus ssqda_model_predict(const struct SsqdaModel *model,
                                const double *x,
                                size_t n,
                                size_t p,
                                uint32_t *labels);

/**
 * Serializes a model to JSON. Release the string with [`ssqda_string_free`].
 *
 * # Safety
 * `model` must be a live handle and `out` writable.
 */
SsqdaStatus ssqda_model_to_json(const struct SsqdaModel *model, char **out);

/**
 * Restores a model written by [`ssqda_model_to_json`] or the command-line tool.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` writable.
 */
SsqdaStatus ssqda_model_from_json(const char *json, struct SsqdaModel **out);

/**
 * Releases a string returned by this library. NULL is ignored.
 *
 * # Safety
 * `s` must come from this library and not be used afterwards.
 */
void ssqda_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SSQDA_H */

#ifndef SMOOTHING_LAB_H
#define SMOOTHING_LAB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SlStatus {
  SL_STATUS_OK = 0,
  /**
   * Null pointer, bad UTF-8 or an out-of-range argument.
   */
  SL_STATUS_INVALID_ARGUMENT = 1,
  /**
   * Invalid model or input data.
   */
  SL_STATUS_INPUT_ERROR = 2,
  /**
   * A computation did not produce a result.
   */
  SL_STATUS_COMPUTATION_ERROR = 3,
  /**
   * A node or element budget was exhausted.
   */
  SL_STATUS_BUDGET_EXCEEDED = 4,
  /**
   * Internal panic caught at the boundary.
   */
  SL_STATUS_PANIC = 5,
} SlStatus;

/**
 * Opaque validated model.
 */
typedef struct SlModel SlModel;

/**
 * Opaque pool of samples, row-major.
 */
typedef struct SlPool SlPool;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last error on this thread; empty when none. Valid until
 * the next failing call on the same thread.
 */
const char *sl_last_error_message(void);

/**
 * Library version, a static string.
 */
const char *sl_version(void);

/**
 * Parse a model from a JSON document.
 *
 * # Safety
 * `json` must be a nul-terminated string and `out` a valid pointer.
 */
enum SlStatus sl_model_from_json(const char *json, struct SlModel **out);

/**
 * Load a model file.
 *
 * # Safety
 * `path` must be a nul-terminated string and `out` a valid pointer.
 */
enum SlStatus sl_model_from_file(const char *path, struct SlModel **out);

/**
 * # Safety
 * `model` must come from `sl_model_from_*` and not be freed twice; null is ignored.
 */
void sl_model_free(struct SlModel *model);

/**
 * # Safety
 * `model` must be a live handle and `out` a valid pointer.
 */
enum SlStatus sl_model_dim(const struct SlModel *model, size_t *out);

/**
 * `m(1) = E[N] r(E[A₁])`, computed exactly.
 *
 * # Safety
 * `model` must be a live handle and `out` a valid pointer.
 */
enum SlStatus sl_model_m_one(const struct SlModel *model, double *out);

/**
 * `κ(1) = r(E[A₁])`.
 *
 * # Safety
 * `model` must be a live handle and `out` a valid pointer.
 */
enum SlStatus sl_kappa_one_exact(const struct SlModel *model, double *out);

/**
 * Spectral radius of a nonnegative `dim x dim` matrix given row-major.
 *
 * # Safety
 * `data` must point to `dim * dim` doubles and `out` be a valid pointer.
 */
enum SlStatus sl_spectral_radius(const double *data, size_t dim, double *out);

/**
 * Hennion distance between the directions of two nonnegative vectors.
 *
 * # Safety
 * `x` and `y` must point to `dim` doubles and `out` be a valid pointer.
 */
enum SlStatus sl_hennion_distance(const double *x, const double *y, size_t dim, double *out);

/**
 * Critical exponent `a₀` of the singleton-branch operator. `*found` is 0
 * when `P[N = 1] = 0` and `*out` is left untouched.
 *
 * # Safety
 * `model` must be a live handle; `out` and `found` valid pointers.
 */
enum SlStatus sl_critical_exponent(const struct SlModel *model,
                                   size_t grid_size,
                                   double *out,
                                   int32_t *found);

/**
 * Run `rounds` fixed-point iterations on a pool of `k` samples starting
 * from `init` (`dim` values), or from the Perron vector of `E[Σ A_i]`
 * when `init` is null.
 *
 * # Safety
 * `model` must be a live handle, `init` null or `dim` doubles, `out` valid.
 */
enum SlStatus sl_run_fixed_point(const struct SlModel *model,
                                 size_t k,
                                 size_t rounds,
                                 const double *init,
                                 uint64_t seed,
                                 struct SlPool **out);

/**
 * # Safety
 * `pool` must be a live handle and `out` a valid pointer.
 */
enum SlStatus sl_pool_len(const struct SlPool *pool, size_t *out);

/**
 * # Safety
 * `pool` must be a live handle and `out` a valid pointer.
 */
enum SlStatus sl_pool_dim(const struct SlPool *pool, size_t *out);

/**
 * Copy the samples row-major into `buf`, which must hold `len * dim` values.
 *
 * # Safety
 * `pool` must be a live handle and `buf` point to `buf_len` writable doubles.
 */
enum SlStatus sl_pool_copy(const struct SlPool *pool, double *buf, size_t buf_len);

/**
 * # Safety
 * `pool` must come from `sl_run_fixed_point` and not be freed twice; null is ignored.
 */
void sl_pool_free(struct SlPool *pool);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SMOOTHING_LAB_H */

#ifndef FRAC_LQR_H
#define FRAC_LQR_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum FlqControl {
  FLQ_CONTROL_ZERO = 0,
  FLQ_CONTROL_OPTIMAL = 1,
} FlqControl;

typedef enum FlqStatus {
  FLQ_STATUS_OK = 0,
  FLQ_STATUS_INVALID_ARGUMENT = 1,
  FLQ_STATUS_NOT_ADMISSIBLE = 2,
  FLQ_STATUS_CONTRACTION_FAILURE = 3,
  FLQ_STATUS_NUMERICAL_FAILURE = 4,
  FLQ_STATUS_NULL_POINTER = 5,
  FLQ_STATUS_PANIC = 6,
} FlqStatus;

/**
 * Synthesized feedback law on a fixed grid.
 */
typedef struct FlqLaw FlqLaw;

/**
 * Validated model.
 */
typedef struct FlqModel FlqModel;

/**
 * Problem parameters, field for field.
 */
typedef struct FlqParams {
  double x0;
  double b;
  double c;
  double sigma;
  double gamma;
  double alpha;
  double delta;
  double lambda;
} FlqParams;

typedef struct FlqConstants {
  double rho_alpha;
  double rho_tilde_alpha;
  double mu;
  double k_lambda;
} FlqConstants;

typedef struct FlqCost {
  double mean;
  double std_error;
  double horizon_truncation_bound;
} FlqCost;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Validate `params` and allocate a model handle into `*out`.
 *
 * # Safety
 * `params` must point to a valid `FlqParams`; `out` must be writable.
 */
enum FlqStatus flq_model_new(const struct FlqParams *params, struct FlqModel **out);

/**
 * # Safety
 * `model` must come from [`flq_model_new`] and not be freed twice. Null is ignored.
 */
void flq_model_free(struct FlqModel *model);

/**
 * Criterion constants and `K_lambda`. `mu = NaN` picks the default weight.
 *
 * # Safety
 * `model` must be a live handle; `out` must be writable.
 */
enum FlqStatus flq_model_constants(const struct FlqModel *model,
                                   double mu,
                                   struct FlqConstants *out);

/**
 * Synthesize on `n` cells. `horizon = NaN` picks the default truncation,
 * `mu = NaN` the default weight.
 *
 * # Safety
 * `model` must be a live handle; `out` must be writable.
 */
enum FlqStatus flq_synthesize(const struct FlqModel *model,
                              double horizon,
                              size_t n,
                              double mu,
                              struct FlqLaw **out);

/**
 * # Safety
 * `law` must come from [`flq_synthesize`] and not be freed twice. Null is ignored.
 */
void flq_law_free(struct FlqLaw *law);

/**
 * Number of nodes (`n + 1`); 0 for a null handle.
 *
 * # Safety
 * `law` must be null or a live handle.
 */
size_t flq_law_len(const struct FlqLaw *law);

/**
 * Copy the `n + 1` nodal values of the deterministic part into `buf`.
 *
 * # Safety
 * `law` must be a live handle; `buf` must hold `len` doubles.
 */
enum FlqStatus flq_law_phi_hat(const struct FlqLaw *law, double *buf, size_t len);

/**
 * Copy the `n + 1` nodal values of the noise kernel into `buf`.
 *
 * # Safety
 * `law` must be a live handle; `buf` must hold `len` doubles.
 */
enum FlqStatus flq_law_psi_hat(const struct FlqLaw *law, double *buf, size_t len);

/**
 * Feedback gain on the delayed state, `-b / c`.
 *
 * # Safety
 * `law` must be a live handle; `out` must be writable.
 */
enum FlqStatus flq_law_gain(const struct FlqLaw *law, double *out);

/**
 * Horizon of the law's grid.
 *
 * # Safety
 * `law` must be a live handle; `out` must be writable.
 */
enum FlqStatus flq_law_horizon(const struct FlqLaw *law, double *out);

/**
 * Monte Carlo cost on the law's grid with seeds `base_seed + i`.
 *
 * # Safety
 * `law` must be a live handle; `out` must be writable.
 */
enum FlqStatus flq_cost_estimate(const struct FlqLaw *law,
                                 enum FlqControl control,
                                 size_t n_paths,
                                 uint64_t base_seed,
                                 struct FlqCost *out);

/**
 * Copy the calling thread's last error message, NUL-terminated and
 * truncated to `len` bytes. Returns the full length including the NUL, so
 * a call with `len = 0` sizes the buffer.
 *
 * # Safety
 * `buf` must be null or hold `len` bytes.
 */
size_t flq_last_error_message(char *buf, size_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FRAC_LQR_H */

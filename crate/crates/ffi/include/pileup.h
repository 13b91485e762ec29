#ifndef PILEUP_H
#define PILEUP_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes. The first four match the command-line exit codes.
 */
typedef enum PileupStatus {
  PILEUP_STATUS_OK = 0,
  PILEUP_STATUS_CONFIG = 1,
  PILEUP_STATUS_DATA = 2,
  PILEUP_STATUS_NUMERICAL = 3,
  PILEUP_STATUS_NULL_POINTER = 4,
  PILEUP_STATUS_PANIC = 5,
} PileupStatus;

/**
 * Cycle sample handle.
 */
typedef struct PileupCycles PileupCycles;

/**
 * Density estimate handle.
 */
typedef struct PileupEstimate PileupEstimate;

/**
 * Mark law handle.
 */
typedef struct PileupModel PileupModel;

/**
 * Estimator settings. Zero in `omega_max`, `denominator_floor` or `y_count`
 * selects the data-driven default; `trapezoid_a` of zero selects the sinc kernel.
 */
typedef struct PileupEstimatorConfig {
  double c;
  double x_trunc;
  double h;
  double omega_max;
  double denominator_floor;
  double trapezoid_a;
  double y_min;
  double y_max;
  size_t y_count;
} PileupEstimatorConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version, a static NUL-terminated string.
 */
const char *pileup_version(void);

/**
 * Message of the last failed call on this thread, or NULL. Valid until the next call.
 */
const char *pileup_last_error(void);

/**
 * Independent bimodal marks.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum PileupStatus pileup_model_bimodal(struct PileupModel **out);

/**
 * Conditional-Gamma durations over the bimodal energy law.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum PileupStatus pileup_model_conditional_gamma(struct PileupModel **out);

/**
 * `X = Y ~ Exp(rate)`.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum PileupStatus pileup_model_mg_exponential(double rate, struct PileupModel **out);

/**
 * # Safety
 * `model` must come from a `pileup_model_*` constructor or be NULL.
 */
void pileup_model_free(struct PileupModel *model);

/**
 * Simulates `n_cycles` complete cycles at rate `lambda`.
 *
 * # Safety
 * `model` must be a live handle and `out` a valid pointer.
 */
enum PileupStatus pileup_simulate(const struct PileupModel *model,
                                  double lambda,
                                  size_t n_cycles,
                                  uint64_t seed,
                                  struct PileupCycles **out);

/**
 * Builds a cycle set from three arrays of length `n`.
 *
 * # Safety
 * The arrays must hold `n` readable doubles; `out` must be a valid pointer.
 */
enum PileupStatus pileup_cycles_new(const double *idle,
                                    const double *duration,
                                    const double *energy,
                                    size_t n,
                                    struct PileupCycles **out);

/**
 * Number of cycles, 0 for NULL.
 *
 * # Safety
 * `cycles` must be a live handle or NULL.
 */
size_t pileup_cycles_len(const struct PileupCycles *cycles);

/**
 * Copies up to `capacity` cycles into the given arrays; returns the number copied.
 *
 * # Safety
 * Each array must have room for `capacity` doubles.
 */
size_t pileup_cycles_copy(const struct PileupCycles *cycles,
                          double *idle,
                          double *duration,
                          double *energy,
                          size_t capacity);

/**
 * # Safety
 * `cycles` must come from this library or be NULL.
 */
void pileup_cycles_free(struct PileupCycles *cycles);

/**
 * Defaults of the estimator (`c = 1e-4`, `x = 60`, `h = 2`, sinc kernel, data-driven grids).
 */
struct PileupEstimatorConfig pileup_estimator_config_default(void);

/**
 * Runs the estimator on a cycle set.
 *
 * # Safety
 * `cycles` and `config` must be valid; `out` must be a valid pointer.
 */
enum PileupStatus pileup_estimate(const struct PileupCycles *cycles,
                                  const struct PileupEstimatorConfig *config,
                                  struct PileupEstimate **out);

/**
 * Number of output grid points, 0 for NULL.
 *
 * # Safety
 * `est` must be a live handle or NULL.
 */
size_t pileup_estimate_len(const struct PileupEstimate *est);

/**
 * Plug-in rate used by the estimate, NaN for NULL.
 *
 * # Safety
 * `est` must be a live handle or NULL.
 */
double pileup_estimate_lambda_hat(const struct PileupEstimate *est);

/**
 * Copies up to `capacity` grid points and density values; returns the number copied.
 *
 * # Safety
 * `y` and `m_hat` must each have room for `capacity` doubles.
 */
size_t pileup_estimate_copy(const struct PileupEstimate *est,
                            double *y,
                            double *m_hat,
                            size_t capacity);

/**
 * # Safety
 * `est` must come from [`pileup_estimate`] or be NULL.
 */
void pileup_estimate_free(struct PileupEstimate *est);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PILEUP_H */

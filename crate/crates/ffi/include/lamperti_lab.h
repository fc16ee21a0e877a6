#ifndef LAMPERTI_LAB_H
#define LAMPERTI_LAB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible function.
 */
typedef enum LlStatus {
  LL_STATUS_OK = 0,
  LL_STATUS_NULL_POINTER = 1,
  /**
   * Argument outside its domain, wrong arity or index.
   */
  LL_STATUS_INVALID_ARGUMENT = 2,
  LL_STATUS_ZERO_MEASURE = 3,
  LL_STATUS_DIVERGENCE = 4,
  LL_STATUS_QUADRATURE = 5,
  LL_STATUS_RESOURCE = 6,
  LL_STATUS_STEP_UNDERFLOW = 7,
  LL_STATUS_CONFIG = 8,
  LL_STATUS_IO = 9,
  /**
   * An internal panic was caught.
   */
  LL_STATUS_INTERNAL = 10,
} LlStatus;

/**
 * The standard forward/dual moment-duality battery.
 */
typedef struct LlBattery LlBattery;

/**
 * Coalescent started from `p` singletons, with its rate table prepared.
 */
typedef struct LlCoalescent LlCoalescent;

/**
 * Model parameters `(kappa, sigma, Lambda)`.
 */
typedef struct LlParams LlParams;

/**
 * Summary of one coalescent trajectory.
 */
typedef struct LlCoalescentSummary {
  /**
   * Time a single block remains, `NaN` if not reached by the horizon.
   */
  double absorption_time;
  size_t final_blocks;
  size_t events;
} LlCoalescentSummary;

/**
 * Outcome of one duality experiment.
 */
typedef struct LlDualityReport {
  double lhs_mean;
  double lhs_se;
  double rhs_mean;
  double rhs_se;
  double z;
  /**
   * 1 when `|z|` is below the acceptance threshold.
   */
  int32_t pass;
} LlDualityReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *ll_version(void);

/**
 * Copies the last error message of this thread into `buf`; returns the
 * size needed, terminator included. Pass `len = 0` to query the size.
 *
 * # Safety
 *
 * Pointer arguments must be null or valid for their documented use;
 * handles must come from this library and not be used after being freed.
 */
size_t ll_last_error_message(char *buf, size_t len);

/**
 * Parameters with `Lambda = kingman * delta_0`.
 *
 * # Safety
 *
 * Pointer arguments must be null or valid for their documented use;
 * handles must come from this library and not be used after being freed.
 */
enum LlStatus ll_params_new(double kappa, double sigma, double kingman, struct LlParams **out);

/**
 * Parameters with `Lambda(dz) = c z^{1-beta} (1-z)^{beta-1} dz`, `beta` in (0, 2).
 *
 * # Safety
 *
 * Pointer arguments must be null or valid for their documented use;
 * handles must come from this library and not be used after being freed.
 */
enum LlStatus ll_params_new_beta(double kappa,
                                 double sigma,
                                 double kingman,
                                 double beta,
                                 double c,
                                 struct LlParams **out);

/**
 * Parameters with `Lambda = sum masses[i] * delta_{zetas[i]}` (plus the
 * Kingman part).
 *
 * # Safety
 *
 * Pointer arguments must be null or valid for their documented use;
 * handles must come from this library and not be used after being freed.
 */
enum LlStatus ll_params_new_atoms(double kappa,
                                  double sigma,
                                  double kingman,
                                  const double *zetas,
                                  const double *masses,
                                  size_t n,
                                  struct LlParams **out);

/**
 * # Safety
 *
 * Pointer arguments must be null or valid for their documented use;
 * handles must come from this library and not be used after being freed.
 */
void ll_params_free(struct LlParams *params);

/**
 * Pairwise coalescence rate `sigma^2 + Lambda({0})`.
 *
 * # Safety
 *
 * Pointer arguments must be null or valid for their documented use;
 * handles must come from this library and not be used after being freed.
 */
enum LlStatus ll_params_pair_rate(const struct LlParams *params, double *out);

/**
 * `beta_{j,i} = int z^{i-2} (1-z)^{j-i} Lambda(dz)`: the rate at which a
 * given `i` of `j` blocks merge. `Lambda({0})` counts for `i = 2`, `sigma`
 * does not.
 *
 * # Safety
 *
 * Pointer arguments must be null or valid for their documented use;
 * handles must come from this library and not be used after being freed.
 */
enum LlStatus ll_params_merger_rate(const struct LlParams *params, size_t j, size_t i, double *out);

/**
 * # Safety
 *
 * Pointer arguments must be null or valid for their documented use;
 * handles must come from this library and not be used after being freed.
 */
enum LlStatus ll_coalescent_new(const struct LlParams *params, size_t p, struct LlCoalescent **out);

/**
 * Simulates replica `replica` of the stream seeded by `seed` on
 * `[0, horizon]`. Results depend only on `(seed, replica)`.
 *
 * # Safety
 *
 * Pointer arguments must be null or valid for their documented use;
 * handles must come from this library and not be used after being freed.
 */
enum LlStatus ll_coalescent_simulate(const struct LlCoalescent *sim,
                                     double horizon,
                                     uint64_t seed,
                                     uint64_t replica,
                                     struct LlCoalescentSummary *out);

/**
 * # Safety
 *
 * Pointer arguments must be null or valid for their documented use;
 * handles must come from this library and not be used after being freed.
 */
void ll_coalescent_free(struct LlCoalescent *sim);

/**
 * # Safety
 *
 * Pointer arguments must be null or valid for their documented use;
 * handles must come from this library and not be used after being freed.
 */
enum LlStatus ll_battery_new(size_t replicas, uint64_t seed, struct LlBattery **out);

/**
 * Number of experiments; 0 for a null handle.
 *
 * # Safety
 *
 * Pointer arguments must be null or valid for their documented use;
 * handles must come from this library and not be used after being freed.
 */
size_t ll_battery_len(const struct LlBattery *battery);

/**
 * Copies the id of experiment `index` into `buf`; `needed` receives the
 * size including the terminator.
 *
 * # Safety
 *
 * Pointer arguments must be null or valid for their documented use;
 * handles must come from this library and not be used after being freed.
 */
enum LlStatus ll_battery_id(const struct LlBattery *battery,
                            size_t index,
                            char *buf,
                            size_t len,
                            size_t *needed);

/**
 * Runs experiment `index` of the battery.
 *
 * # Safety
 *
 * Pointer arguments must be null or valid for their documented use;
 * handles must come from this library and not be used after being freed.
 */
enum LlStatus ll_battery_run(const struct LlBattery *battery,
                             size_t index,
                             struct LlDualityReport *out);

/**
 * # Safety
 *
 * Pointer arguments must be null or valid for their documented use;
 * handles must come from this library and not be used after being freed.
 */
void ll_battery_free(struct LlBattery *battery);

/**
 * Probability that two sampled individuals share a type at time `t`
 * under pure Kingman resampling at pair rate `s2`, started from `f0`.
 */
double ll_kingman_closed_form(double s2, double t, double f0);

/**
 * Writes `int_0^{times[k]} m_u^{-alpha} du` for the piecewise-constant
 * mass path `(times, masses)` into `out[k]`. Entries past the lifetime
 * of the clock are set to `+inf` when it explodes and `NaN` when it
 * freezes.
 *
 * # Safety
 *
 * Pointer arguments must be null or valid for their documented use;
 * handles must come from this library and not be used after being freed.
 */
enum LlStatus ll_lamperti_clock(const double *times,
                                const double *masses,
                                size_t n,
                                double alpha,
                                double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LAMPERTI_LAB_H */

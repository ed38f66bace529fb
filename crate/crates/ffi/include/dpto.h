#ifndef DPTO_H
#define DPTO_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes. Values 0 to 3 match the command-line exit codes.
 */
typedef enum DptoStatus {
  DPTO_STATUS_OK = 0,
  DPTO_STATUS_CONFIG_ERROR = 1,
  DPTO_STATUS_INFEASIBLE = 2,
  DPTO_STATUS_DIVERGED = 3,
  DPTO_STATUS_INVALID_ARGUMENT = 4,
  DPTO_STATUS_PANIC = 5,
} DptoStatus;

/**
 * A parsed, validated experiment with its current gains.
 */
typedef struct DptoExperiment DptoExperiment;

/**
 * The recorded output of one run.
 */
typedef struct DptoResult DptoResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread, or NULL. The pointer
 * stays valid until the next call into this library on the same thread.
 */
const char *dpto_last_error(void);

/**
 * Parses and validates a TOML experiment. On success `*out` owns a new handle.
 *
 * # Safety
 * `toml` must be a NUL-terminated string and `out` a valid pointer.
 */
enum DptoStatus dpto_experiment_from_toml(const char *toml, struct DptoExperiment **out);

/**
 * # Safety
 * `exp` must be NULL or a handle from [`dpto_experiment_from_toml`] not yet freed.
 */
void dpto_experiment_free(struct DptoExperiment *exp);

/**
 * Lower bound on β over every topology of the experiment.
 *
 * # Safety
 * `exp` must be a live handle and `out` a valid pointer.
 */
enum DptoStatus dpto_experiment_beta_bound(const struct DptoExperiment *exp, double *out);

/**
 * Replaces the experiment's gains with synthesized ones and writes them to
 * `gains_out[0..3]` as (α, β, σ) when `gains_out` is not NULL.
 *
 * # Safety
 * `exp` must be a live handle; `gains_out` NULL or valid for three doubles.
 */
enum DptoStatus dpto_experiment_synthesize(struct DptoExperiment *exp,
                                           double alpha,
                                           double beta_factor,
                                           double sigma_factor,
                                           double *gains_out);

/**
 * Sets explicit gains.
 *
 * # Safety
 * `exp` must be a live handle.
 */
enum DptoStatus dpto_experiment_set_gains(struct DptoExperiment *exp,
                                          double alpha,
                                          double beta,
                                          double sigma);

/**
 * Runs the simulation. On success `*out` owns a new result handle.
 *
 * # Safety
 * `exp` must be a live handle and `out` a valid pointer.
 */
enum DptoStatus dpto_run(const struct DptoExperiment *exp, struct DptoResult **out);

/**
 * # Safety
 * `res` must be NULL or a handle from [`dpto_run`] not yet freed.
 */
void dpto_result_free(struct DptoResult *res);

/**
 * Number of recorded samples, 0 for NULL.
 *
 * # Safety
 * `res` must be NULL or a live handle.
 */
size_t dpto_result_sample_count(const struct DptoResult *res);

/**
 * Leader order `n`, 0 for NULL.
 *
 * # Safety
 * `res` must be NULL or a live handle.
 */
size_t dpto_result_order(const struct DptoResult *res);

/**
 * Follower count `N`, 0 for NULL.
 *
 * # Safety
 * `res` must be NULL or a live handle.
 */
size_t dpto_result_follower_count(const struct DptoResult *res);

/**
 * Time of sample `sample` (0-based).
 *
 * # Safety
 * `res` must be a live handle and `out` a valid pointer.
 */
enum DptoStatus dpto_result_time(const struct DptoResult *res, size_t sample, double *out);

/**
 * Global error of `follower` on `state` at `sample`. Follower and state are
 * 1-based, the sample index is 0-based.
 *
 * # Safety
 * `res` must be a live handle and `out` a valid pointer.
 */
enum DptoStatus dpto_result_error(const struct DptoResult *res,
                                  size_t sample,
                                  size_t follower,
                                  size_t state,
                                  double *out);

/**
 * Stage-`stage` Lyapunov value at `sample`.
 *
 * # Safety
 * `res` must be a live handle and `out` a valid pointer.
 */
enum DptoStatus dpto_result_lyapunov(const struct DptoResult *res,
                                     size_t sample,
                                     size_t stage,
                                     double *out);

/**
 * Convergence time of `state` (1-based), or NaN if the tolerance was never
 * held to the end of the run.
 *
 * # Safety
 * `res` must be a live handle and `out` a valid pointer.
 */
enum DptoStatus dpto_result_convergence_time(const struct DptoResult *res,
                                             size_t state,
                                             double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DPTO_H */

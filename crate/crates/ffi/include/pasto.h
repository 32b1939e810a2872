#ifndef PASTO_H
#define PASTO_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum PastoStatus {
  PASTO_STATUS_OK = 0,
  PASTO_STATUS_NULL_POINTER = 1,
  PASTO_STATUS_INVALID_ARGUMENT = 2,
  PASTO_STATUS_CONFIG_ERROR = 3,
  PASTO_STATUS_RUNTIME_ERROR = 4,
  PASTO_STATUS_PANIC = 5,
} PastoStatus;

/**
 * Smoothing schedule selector for [`PastoRunOptions`].
 */
typedef enum PastoEpsilonKind {
  /**
   * `epsilon_a / sqrt(t)`.
   */
  PASTO_EPSILON_KIND_THEORY_GT = 0,
  /**
   * `epsilon_a / sqrt(t + param_b)`.
   */
  PASTO_EPSILON_KIND_PAPER_SIM = 1,
  /**
   * `epsilon_a`.
   */
  PASTO_EPSILON_KIND_CONSTANT = 2,
} PastoEpsilonKind;

typedef enum PastoFormat {
  PASTO_FORMAT_CSV = 0,
  PASTO_FORMAT_JSON = 1,
} PastoFormat;

typedef struct PastoEnvironment PastoEnvironment;

typedef struct PastoObjective PastoObjective;

typedef struct PastoResult PastoResult;

/**
 * Plain-data run settings. Start from [`pasto_run_options_default`].
 */
typedef struct PastoRunOptions {
  size_t horizon;
  double gamma;
  enum PastoEpsilonKind epsilon_kind;
  double epsilon_a;
  double epsilon_b;
  size_t parallel_q;
  double prior_weight;
  uint64_t rng_seed;
} PastoRunOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread; empty if none. The
 * pointer stays valid until the next failing call on the same thread.
 */
const char *pasto_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *pasto_version(void);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void pasto_string_free(char *s);

/**
 * Objective `z[primary]` with no guardrails.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum PastoStatus pasto_objective_new(size_t primary, struct PastoObjective **out);

/**
 * Adds `-lambda * min(0, z[metric] - threshold)^2`.
 *
 * # Safety
 * `obj` must be a live objective handle.
 */
enum PastoStatus pasto_objective_add_soft(struct PastoObjective *obj,
                                          size_t metric,
                                          double threshold,
                                          double lambda);

/**
 * Adds a barrier that is `-inf` whenever `z[metric] < threshold`. Such
 * objectives work with the oracles but not with [`pasto_run`].
 *
 * # Safety
 * `obj` must be a live objective handle.
 */
enum PastoStatus pasto_objective_add_hard(struct PastoObjective *obj,
                                          size_t metric,
                                          double threshold);

/**
 * # Safety
 * `obj` must be null or a handle not yet freed.
 */
void pasto_objective_free(struct PastoObjective *obj);

/**
 * Gaussian environment around a row-major `metrics x arms` mean matrix.
 *
 * # Safety
 * `mu` must point to `metrics * arms` doubles; `out` must be writable.
 */
enum PastoStatus pasto_environment_new(const double *mu,
                                       size_t metrics,
                                       size_t arms,
                                       double sigma,
                                       uint64_t seed,
                                       struct PastoEnvironment **out);

/**
 * The two-arm study environment and its objective.
 *
 * # Safety
 * Both out-pointers must be writable.
 */
enum PastoStatus pasto_setting_a(double noise_variance,
                                 uint64_t seed,
                                 struct PastoEnvironment **env_out,
                                 struct PastoObjective **obj_out);

/**
 * A random `k`-arm, three-metric study instance and its objective.
 *
 * # Safety
 * Both out-pointers must be writable.
 */
enum PastoStatus pasto_setting_b(size_t k,
                                 uint64_t seed,
                                 double sigma,
                                 struct PastoEnvironment **env_out,
                                 struct PastoObjective **obj_out);

/**
 * Returns 0 for a null handle.
 *
 * # Safety
 * `env` must be null or a live handle.
 */
size_t pasto_environment_num_arms(const struct PastoEnvironment *env);

/**
 * Returns 0 for a null handle.
 *
 * # Safety
 * `env` must be null or a live handle.
 */
size_t pasto_environment_num_metrics(const struct PastoEnvironment *env);

/**
 * Copies the mean matrix (row-major, `metrics * arms` doubles) into `out`.
 *
 * # Safety
 * `out` must hold `len` doubles.
 */
enum PastoStatus pasto_environment_ground_truth(const struct PastoEnvironment *env,
                                                double *out,
                                                size_t len);

/**
 * # Safety
 * `env` must be null or a handle not yet freed.
 */
void pasto_environment_free(struct PastoEnvironment *env);

/**
 * Study defaults for `arms` arms: `gamma = 0.1 / arms`, smoothing
 * `0.1 / sqrt(t + 10)`, one query per round.
 */
struct PastoRunOptions pasto_run_options_default(size_t arms, size_t horizon, uint64_t rng_seed);

/**
 * Runs the optimizer, advancing the environment's noise stream.
 *
 * # Safety
 * Handles must be live; `options` and `out` must be valid pointers.
 */
enum PastoStatus pasto_run(struct PastoEnvironment *env,
                           const struct PastoObjective *obj,
                           const struct PastoRunOptions *options,
                           struct PastoResult **out);

/**
 * Returns 0 for a null handle.
 *
 * # Safety
 * `result` must be null or a live handle.
 */
size_t pasto_result_num_arms(const struct PastoResult *result);

/**
 * Returns 0 for a null handle.
 *
 * # Safety
 * `result` must be null or a live handle.
 */
size_t pasto_result_horizon(const struct PastoResult *result);

/**
 * Copies the averaged iterate into `out` (`len` must equal the arm count).
 *
 * # Safety
 * `out` must hold `len` doubles.
 */
enum PastoStatus pasto_result_p_bar(const struct PastoResult *result, double *out, size_t len);

/**
 * Copies the iterate `p_t` of round `t` (1-based) into `out`.
 *
 * # Safety
 * `out` must hold `len` doubles.
 */
enum PastoStatus pasto_result_iterate(const struct PastoResult *result,
                                      size_t t,
                                      double *out,
                                      size_t len);

/**
 * # Safety
 * `result` must be null or a handle not yet freed.
 */
void pasto_result_free(struct PastoResult *result);

/**
 * Best single arm for a row-major mean matrix.
 *
 * # Safety
 * `mu` must hold `metrics * arms` doubles; out-pointers must be writable.
 */
enum PastoStatus pasto_single_best_oracle(const double *mu,
                                          size_t metrics,
                                          size_t arms,
                                          const struct PastoObjective *obj,
                                          size_t *arm_out,
                                          double *value_out);

/**
 * Best pmf for a row-major mean matrix (differentiable objectives only).
 *
 * # Safety
 * `mu` must hold `metrics * arms` doubles, `p_out` must hold `arms`.
 */
enum PastoStatus pasto_prob_oracle(const double *mu,
                                   size_t metrics,
                                   size_t arms,
                                   const struct PastoObjective *obj,
                                   size_t iters,
                                   double *p_out,
                                   double *value_out);

/**
 * Runs a full JSON experiment and returns the aggregated table as text.
 * The worker count follows `PASTO_THREADS`.
 *
 * # Safety
 * `config_json` must be a NUL-terminated string; `out` must be writable.
 */
enum PastoStatus pasto_run_experiment_json(const char *config_json,
                                           enum PastoFormat format,
                                           char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PASTO_H */

#ifndef PRIVMAP_H
#define PRIVMAP_H

/* Generated with cbindgen:0.29.4 */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status of a fallible call.
 */
typedef enum PmStatus {
  PmOk = 0,
  PmInvalidArgument = 1,
  PmNotFound = 2,
  PmRejected = 3,
  PmInfeasible = 4,
  PmBudgetExceeded = 5,
  PmIoError = 6,
  PmInternalError = 7,
} PmStatus;

typedef struct PmFleet PmFleet;

typedef struct PmModel PmModel;

typedef struct PmPolicy PmPolicy;

/**
 * Metrics of one solved placement.
 */
typedef struct PmSolveResult {
  /**
   * Objective value in seconds.
   */
  double objective_s;
  /**
   * Bits exchanged between distinct devices.
   */
  uint64_t shared_bits;
  /**
   * Sum of per-layer latencies of the request, equal to the objective
   * for single-request solves.
   */
  double request_latency_s;
} PmSolveResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the most recent failure on this thread. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *pm_last_error(void);

/**
 * Crate version as a static string.
 */
const char *pm_version(void);

/**
 * Loads a built-in CNN preset by name; null on failure.
 *
 * # Safety
 * `name` must be a valid NUL-terminated string.
 */
struct PmModel *pm_model_preset(const char *name);

/**
 * Loads a model description file; null on failure.
 *
 * # Safety
 * `path` must be a valid NUL-terminated string.
 */
struct PmModel *pm_model_from_file(const char *path);

/**
 * # Safety
 * `model` must come from `pm_model_preset` or `pm_model_from_file` and not
 * already be freed.
 */
void pm_model_free(struct PmModel *model);

/**
 * # Safety
 * `model` must be a live handle.
 */
size_t pm_model_layer_count(const struct PmModel *model);

/**
 * Total multiplications of one inference.
 *
 * # Safety
 * `model` must be a live handle.
 */
uint64_t pm_model_total_multiplications(const struct PmModel *model);

/**
 * Derives the feature-map caps and split point for `model` at the given
 * tolerated inversion SSIM, using the embedded measurement table. Null on
 * failure; a tolerance of 1.0 succeeds even for unmeasured datasets.
 *
 * # Safety
 * `model` must be a live handle.
 */
struct PmPolicy *pm_policy_derive(const struct PmModel *model, double tolerance, double epsilon);

/**
 * # Safety
 * `policy` must come from `pm_policy_derive` and not already be freed.
 */
void pm_policy_free(struct PmPolicy *policy);

/**
 * First 1-based layer whose full output may sit on one device; one past the
 * last layer when every layer stays capped.
 *
 * # Safety
 * `policy` must be a live handle.
 */
size_t pm_policy_split_point(const struct PmPolicy *policy);

/**
 * Cap on how many maps of producing layer `layer` one helper may receive;
 * 0 means unbounded.
 *
 * # Safety
 * `policy` must be a live handle.
 */
uint64_t pm_policy_layer_cap(const struct PmPolicy *policy, size_t layer);

/**
 * A fleet whose per-period budgets are scaled by `period` seconds.
 */
struct PmFleet *pm_fleet_new(double period);

/**
 * # Safety
 * `fleet` must come from `pm_fleet_new` and not already be freed.
 */
void pm_fleet_free(struct PmFleet *fleet);

/**
 * Adds `count` helpers of a device class ("rpi3", "lg_nexus", "stm32h7").
 *
 * # Safety
 * `fleet` must be a live handle and `class_name` a valid string.
 */
enum PmStatus pm_fleet_add_helpers(struct PmFleet *fleet, const char *class_name, size_t count);

/**
 * Adds one source camera bound to the named CNN.
 *
 * # Safety
 * `fleet` must be a live handle and `cnn_name` a valid string.
 */
enum PmStatus pm_fleet_add_source(struct PmFleet *fleet, const char *cnn_name);

/**
 * Places one request of `model` with the online scheduler. Privacy or
 * resource shortfalls surface as `PM_REJECTED` with a diagnostic in
 * `pm_last_error`.
 *
 * # Safety
 * All handles must be live; `out` must point to writable memory.
 */
enum PmStatus pm_solve_greedy(const struct PmModel *model,
                              const struct PmPolicy *policy,
                              const struct PmFleet *fleet,
                              double alpha,
                              double beta,
                              struct PmSolveResult *out);

/**
 * Solves one request of `model` to optimality within desk-scale limits.
 * A `max_nodes` of zero keeps the default search budget.
 *
 * # Safety
 * All handles must be live; `out` must point to writable memory.
 */
enum PmStatus pm_solve_exact(const struct PmModel *model,
                             const struct PmPolicy *policy,
                             const struct PmFleet *fleet,
                             uint64_t max_nodes,
                             struct PmSolveResult *out);

/**
 * Runs a scenario file and writes its CSV report; `summary_json_path` may
 * be null, `seed_override` below zero keeps the file's seed.
 *
 * # Safety
 * Paths must be valid NUL-terminated strings (or null where allowed).
 */
enum PmStatus pm_run_scenario_file(const char *scenario_path,
                                   const char *report_csv_path,
                                   const char *summary_json_path,
                                   int64_t seed_override);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PRIVMAP_H */

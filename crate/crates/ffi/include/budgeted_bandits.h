#ifndef BUDGETED_BANDITS_H
#define BUDGETED_BANDITS_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes.
typedef enum BbStatus {
  BB_STATUS_OK = 0,
  BB_STATUS_NULL_POINTER = 1,
  BB_STATUS_INVALID_UTF8 = 2,
  BB_STATUS_INVALID_INPUT = 3,
  BB_STATUS_VALIDATION = 4,
  BB_STATUS_WRONG_VARIANT = 5,
  BB_STATUS_NON_INTEGER_COST = 6,
  BB_STATUS_STATE_SPACE_TOO_LARGE = 7,
  BB_STATUS_LP = 8,
  BB_STATUS_NOT_OPTIMAL = 9,
  BB_STATUS_INCONSISTENT = 10,
  BB_STATUS_IO = 11,
  BB_STATUS_JSON = 12,
  BB_STATUS_PANIC = 13,
} BbStatus;

// Rounding executor selector.
typedef enum BbExecutor {
  // The executor matching the instance objective.
  BB_EXECUTOR_DEFAULT = 0,
  BB_EXECUTOR_GREEDY_ORDER = 1,
  BB_EXECUTOR_GREEDY_VIOLATE = 2,
  BB_EXECUTOR_LAGRANGEAN = 3,
  BB_EXECUTOR_CONCAVE = 4,
} BbExecutor;

// A parsed bandit instance.
typedef struct BbInstance BbInstance;

// A solved relaxation with its single-arm policies and greedy plan.
typedef struct BbSolver BbSolver;

// Exact expectation of a rounded policy.
typedef struct BbExactResult {
  double value;
  double expected_reward;
  double expected_cost;
} BbExactResult;

// Monte-Carlo estimate of a rounded policy.
typedef struct BbMonteCarloResult {
  double mean;
  double std_error;
  double mean_cost;
  double max_cost;
  // Traces that failed the structural checks.
  uint64_t violations;
} BbMonteCarloResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failure on this thread, or NULL. The pointer stays
// valid until the next failing call on the same thread.
const char *bb_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *bb_version(void);

// Releases a string returned by this library. NULL is ignored.
//
// # Safety
// `s` must come from this library and not be freed twice.
void bb_string_free(char *s);

// Parses an instance from JSON. Model violations are reported by
// [`bb_instance_diagnostic_count`], not here.
//
// # Safety
// `json` must be a NUL-terminated string and `out` a valid pointer.
enum BbStatus bb_instance_from_json(const char *json, struct BbInstance **out);

// Serializes an instance to JSON; free the result with [`bb_string_free`].
//
// # Safety
// `instance` must be a live handle and `out` a valid pointer.
enum BbStatus bb_instance_to_json(const struct BbInstance *instance, char **out);

// # Safety
// `instance` must be NULL or a handle not yet freed.
void bb_instance_free(struct BbInstance *instance);

// Number of arms, or 0 for NULL.
//
// # Safety
// `instance` must be NULL or a live handle.
size_t bb_instance_n_arms(const struct BbInstance *instance);

// Number of model diagnostics; zero means the instance is clean.
//
// # Safety
// `instance` must be a live handle and `out` a valid pointer.
enum BbStatus bb_instance_diagnostic_count(const struct BbInstance *instance, size_t *out);

// Optimal value of the instance's LP relaxation.
//
// # Safety
// `instance` must be a live handle and `gamma_star` a valid pointer.
enum BbStatus bb_solve_relaxation(const struct BbInstance *instance, double *gamma_star);

// Exact optimal adaptive value by dynamic programming, refusing instances
// whose estimated joint state count exceeds `limit`.
//
// # Safety
// `instance` must be a live handle and `opt` a valid pointer.
enum BbStatus bb_dp_optimal(const struct BbInstance *instance, size_t limit, double *opt);

// Solves the relaxation, extracts single-arm policies and builds the
// greedy plan (`alpha > 1` gives the bicriteria plan with budget
// `alpha C`).
//
// # Safety
// `instance` must be a live handle and `out` a valid pointer.
enum BbStatus bb_solver_new(const struct BbInstance *instance, double alpha, struct BbSolver **out);

// # Safety
// `solver` must be NULL or a handle not yet freed.
void bb_solver_free(struct BbSolver *solver);

// LP optimum behind the solver, or NaN for NULL.
//
// # Safety
// `solver` must be NULL or a live handle.
double bb_solver_gamma_star(const struct BbSolver *solver);

// Writes the plan's arm order (indices into the instance) into `order`,
// which must hold `capacity` entries; `len` receives the plan length.
//
// # Safety
// `solver` must be a live handle, `len` valid, and `order` valid for
// `capacity` writes (it may be NULL when `capacity` is 0).
enum BbStatus bb_solver_plan_order(const struct BbSolver *solver,
                                   size_t *order,
                                   size_t capacity,
                                   size_t *len);

// The plan as JSON; free the result with [`bb_string_free`].
//
// # Safety
// `solver` must be a live handle and `out` a valid pointer.
enum BbStatus bb_solver_plan_json(const struct BbSolver *solver, char **out);

// Exact expected value, reward and cost of the rounded policy.
//
// # Safety
// `solver` must be a live handle and `out` a valid pointer.
enum BbStatus bb_solver_evaluate_exact(const struct BbSolver *solver,
                                       enum BbExecutor exec,
                                       struct BbExactResult *out);

// Monte-Carlo estimate over `reps` traces; replication `k` uses RNG stream
// `k` of `seed`.
//
// # Safety
// `solver` must be a live handle and `out` a valid pointer.
enum BbStatus bb_solver_monte_carlo(const struct BbSolver *solver,
                                    enum BbExecutor exec,
                                    uint64_t reps,
                                    uint64_t seed,
                                    struct BbMonteCarloResult *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BUDGETED_BANDITS_H */

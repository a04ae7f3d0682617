#ifndef ORBIT_MLE_H
#define ORBIT_MLE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum OmleStatus {
  OMLE_STATUS_OK = 0,
  OMLE_STATUS_NULL_POINTER = 1,
  OMLE_STATUS_INVALID_ARGUMENT = 2,
  OMLE_STATUS_SINGULAR_GEOMETRY = 3,
  OMLE_STATUS_OPTIMIZATION_FAILED = 4,
  /**
   * The estimate was written but the solver did not meet its tolerances.
   */
  OMLE_STATUS_NOT_CONVERGED = 5,
  OMLE_STATUS_INTERNAL = 6,
} OmleStatus;

/**
 * Radars, their measurements and the feasible set.
 */
typedef struct OmleProblem OmleProblem;

typedef struct OmleSolverOptions {
  size_t max_iterations;
  double gradient_tolerance;
  double step_tolerance;
  size_t num_starts;
  double armijo_c;
  double backtrack_factor;
} OmleSolverOptions;

typedef struct OmleBounds {
  double r_min;
  double r_max;
  double v_max;
} OmleBounds;

typedef struct OmleSite {
  double position[3];
  double sigma_d;
  double kappa;
  double sigma_f;
  double f_c;
} OmleSite;

typedef struct OmleMeasurement {
  double d;
  double u[3];
  double f;
} OmleMeasurement;

/**
 * Position (m) and velocity (m/s).
 */
typedef struct OmleState {
  double r[3];
  double v[3];
} OmleState;

typedef struct OmleEstimate {
  struct OmleState state;
  double objective_value;
  bool converged;
  size_t iterations;
  double gradient_norm;
  size_t start_index;
} OmleEstimate;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Default solver settings.
 */
struct OmleSolverOptions omle_solver_options_default(void);

/**
 * Default feasible set.
 */
struct OmleBounds omle_bounds_default(void);

/**
 * Message for the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next call into this library on the
 * same thread.
 */
const char *omle_last_error_message(void);

/**
 * New empty problem with default bounds. Returns null only on allocation failure.
 */
struct OmleProblem *omle_problem_new(void);

/**
 * # Safety
 * `problem` must be null or a handle from [`omle_problem_new`] not yet freed.
 */
void omle_problem_free(struct OmleProblem *problem);

/**
 * # Safety
 * `problem` must be a live handle or null.
 */
size_t omle_problem_site_count(const struct OmleProblem *problem);

/**
 * # Safety
 * Pointers must be null or valid for the duration of the call.
 */
enum OmleStatus omle_problem_add_site(struct OmleProblem *problem, const struct OmleSite *site);

/**
 * Appends the measurement for the next site in order.
 *
 * # Safety
 * Pointers must be null or valid for the duration of the call.
 */
enum OmleStatus omle_problem_add_measurement(struct OmleProblem *problem,
                                             const struct OmleMeasurement *m);

/**
 * # Safety
 * Pointers must be null or valid for the duration of the call.
 */
enum OmleStatus omle_problem_set_bounds(struct OmleProblem *problem,
                                        const struct OmleBounds *bounds);

/**
 * Replaces the measurements with one simulated tuple per site, drawn at
 * `truth` with the streams of `seed`.
 *
 * # Safety
 * Pointers must be null or valid for the duration of the call.
 */
enum OmleStatus omle_problem_simulate(struct OmleProblem *problem,
                                      const struct OmleState *truth,
                                      uint64_t seed);

/**
 * Copies measurement `index` into `out`.
 *
 * # Safety
 * Pointers must be null or valid for the duration of the call.
 */
enum OmleStatus omle_problem_measurement(const struct OmleProblem *problem,
                                         size_t index,
                                         struct OmleMeasurement *out);

/**
 * Negative log-likelihood (up to a constant) at `theta`.
 *
 * # Safety
 * Pointers must be null or valid for the duration of the call.
 */
enum OmleStatus omle_problem_objective(const struct OmleProblem *problem,
                                       const struct OmleState *theta,
                                       double *out);

/**
 * Objective gradient at `theta`: three position then three velocity components.
 *
 * # Safety
 * `out` must be null or point to six writable doubles.
 */
enum OmleStatus omle_problem_gradient(const struct OmleProblem *problem,
                                      const struct OmleState *theta,
                                      double (*out)[6]);

/**
 * Maximum-likelihood estimate. `options` may be null for defaults. Returns
 * `NotConverged` with `out` filled when the solver stops early.
 *
 * # Safety
 * Pointers must be null (where allowed) or valid for the duration of the call.
 */
enum OmleStatus omle_problem_estimate(const struct OmleProblem *problem,
                                      const struct OmleSolverOptions *options,
                                      uint64_t seed,
                                      struct OmleEstimate *out);

/**
 * Normalising constant `b_n` over the problem's sites with scaled perturbation `delta`.
 *
 * # Safety
 * Pointers must be null or valid for the duration of the call.
 */
enum OmleStatus omle_problem_compute_bn(const struct OmleProblem *problem,
                                        const struct OmleState *theta0,
                                        double delta,
                                        double *out);

/**
 * von Mises–Fisher log-density of unit vector `u` about unit mean `mu`.
 *
 * # Safety
 * Pointers must be null or valid for the duration of the call.
 */
enum OmleStatus omle_vmf_log_density(const double (*u)[3],
                                     const double (*mu)[3],
                                     double kappa,
                                     double *out);

/**
 * Mean resultant length `coth(kappa) - 1/kappa`.
 *
 * # Safety
 * `out` must be null or valid for writes.
 */
enum OmleStatus omle_vmf_mean_resultant(double kappa, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ORBIT_MLE_H */

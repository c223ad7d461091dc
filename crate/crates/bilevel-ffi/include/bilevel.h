#ifndef BILEVEL_H
#define BILEVEL_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status code returned by every fallible call.
 */
typedef enum {
  BILEVEL_STATUS_OK = 0,
  BILEVEL_STATUS_NULL_ARGUMENT = 1,
  BILEVEL_STATUS_INVALID_ARGUMENT = 2,
  BILEVEL_STATUS_UNSUPPORTED = 3,
  BILEVEL_STATUS_NUMERICAL_FAILURE = 4,
  BILEVEL_STATUS_ILL_CONDITIONED = 5,
  BILEVEL_STATUS_BUFFER_TOO_SMALL = 6,
} BilevelStatus;

/**
 * Opaque problem handle.
 */
typedef struct BilevelProblemHandle BilevelProblemHandle;

/**
 * Opaque handle over a finished run.
 */
typedef struct BilevelRunHandle BilevelRunHandle;

/**
 * Run configuration mirrored over the C boundary. `mu <= 0` and
 * `truncate_at <= 0` mean "unset"; `adaptive_outer` selects adaptive-moment
 * outer steps instead of plain projected gradient.
 */
typedef struct {
  const char *method;
  uintptr_t outer_iters;
  uintptr_t inner_iters;
  double alpha_inner;
  double alpha_x;
  double alpha_z;
  double mu;
  intptr_t truncate_at;
  uint64_t seed;
  bool adaptive_outer;
} BilevelRunConfig;

/**
 * One logged outer step; relative errors are NaN when the problem has no
 * known optimum.
 */
typedef struct {
  uintptr_t t;
  double upper_value;
  double x_rel_err;
  double upper_rel_err;
  uintptr_t selected_index;
  double grad_norm_x;
  double grad_norm_z;
  double residual;
  uint64_t wall_millis;
} BilevelLogRow;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copy the last error message (NUL-terminated, truncated to `len`) into
 * `buf`; returns the full message length in bytes, excluding the NUL.
 */
uintptr_t bilevel_last_error_message(char *buf, uintptr_t len);

/**
 * One-dimensional non-convex test problem with a known unique solution.
 */
BilevelStatus bilevel_problem_sine(BilevelProblemHandle **out);

/**
 * Convex test problem with an n-dimensional upper level and a 2n-dimensional
 * lower level whose solution set is a flat affine subspace.
 */
BilevelStatus bilevel_problem_quadratic(uintptr_t n, BilevelProblemHandle **out);

/**
 * Synthetic data hyper-cleaning problem; `n_hidden = 0` selects the linear
 * classifier, anything larger a two-layer perceptron.
 */
BilevelStatus bilevel_problem_hyperclean(uintptr_t n_train,
                                         uintptr_t n_val,
                                         uintptr_t n_features,
                                         uintptr_t n_classes,
                                         double corrupt_fraction,
                                         uintptr_t n_hidden,
                                         uint64_t seed,
                                         BilevelProblemHandle **out);

/**
 * Release a problem handle. Passing NULL is a no-op.
 */
void bilevel_problem_free(BilevelProblemHandle *handle);

/**
 * Upper and lower dimensions of a problem.
 */
BilevelStatus bilevel_problem_dims(const BilevelProblemHandle *handle,
                                   uintptr_t *upper_dim,
                                   uintptr_t *lower_dim);

/**
 * Euclidean norm of the proximal-gradient residual at (x, y); zero exactly
 * at lower-level stationary points.
 */
BilevelStatus bilevel_residual_norm(const BilevelProblemHandle *handle,
                                    const double *x,
                                    uintptr_t x_len,
                                    const double *y,
                                    uintptr_t y_len,
                                    double alpha,
                                    double *out);

/**
 * Execute a solver run; on success the caller owns the returned handle.
 */
BilevelStatus bilevel_run(const BilevelProblemHandle *handle,
                          const BilevelRunConfig *config,
                          const double *x0,
                          uintptr_t x0_len,
                          const double *z0,
                          uintptr_t z0_len,
                          BilevelRunHandle **out);

/**
 * Release a run handle. Passing NULL is a no-op.
 */
void bilevel_run_free(BilevelRunHandle *handle);

/**
 * Number of logged outer steps in a run.
 */
uintptr_t bilevel_run_steps(const BilevelRunHandle *handle);

BilevelStatus bilevel_run_log(const BilevelRunHandle *handle, uintptr_t t, BilevelLogRow *out);

/**
 * Final upper variable of a run.
 */
BilevelStatus bilevel_run_final_upper(const BilevelRunHandle *handle, double *buf, uintptr_t len);

/**
 * Final inner initialization of a run.
 */
BilevelStatus bilevel_run_final_init(const BilevelRunHandle *handle, double *buf, uintptr_t len);

/**
 * Reverse-mode hypergradient of the truncated objective
 * F(x, y_{k̄}(x, z)) after `inner_iters` projected-gradient steps at rate
 * `alpha_inner`, truncated at `truncate_index` (1-based).
 */
BilevelStatus bilevel_hypergradient(const BilevelProblemHandle *handle,
                                    const double *x,
                                    uintptr_t x_len,
                                    const double *z,
                                    uintptr_t z_len,
                                    uintptr_t inner_iters,
                                    uintptr_t truncate_index,
                                    double alpha_inner,
                                    double *gx_buf,
                                    uintptr_t gx_len,
                                    double *gz_buf,
                                    uintptr_t gz_len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BILEVEL_H */

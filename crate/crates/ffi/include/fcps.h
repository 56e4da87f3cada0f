#ifndef FCPS_H
#define FCPS_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum FcpsStatus {
  FCPS_STATUS_OK = 0,
  FCPS_STATUS_NULL_POINTER = 1,
  FCPS_STATUS_CONTRACT = 2,
  FCPS_STATUS_FACTORIZATION = 3,
  FCPS_STATUS_NUMERICAL = 4,
  FCPS_STATUS_CONFIG = 5,
  FCPS_STATUS_SIMULATION = 6,
  FCPS_STATUS_IO = 7,
  FCPS_STATUS_JSON = 8,
  FCPS_STATUS_INVALID_UTF8 = 9,
  FCPS_STATUS_PANIC = 10,
} FcpsStatus;

/**
 * Toy-cannon world with its hills.
 */
typedef struct FcpsCannonWorld FcpsCannonWorld;

/**
 * Gaussian-process posterior with fixed hyperparameters.
 */
typedef struct FcpsGp FcpsGp;

/**
 * Objective callback for [`fcps_direct_maximize`]: receives `user_data`,
 * a point and its dimension.
 */
typedef double (*FcpsObjective)(void *user_data, const double *x, size_t dim);

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer
 * stays valid until the next call into the library from the same thread.
 */
const char *fcps_last_error_message(void);

/**
 * Library version as a static string.
 */
const char *fcps_version(void);

/**
 * Release a string returned by the library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed already.
 */
void fcps_string_free(char *s);

/**
 * Generate the cannon world for `seed`.
 *
 * # Safety
 * `out` must be a valid pointer to write the handle to.
 */
enum FcpsStatus fcps_cannon_world_new(uint64_t seed, struct FcpsCannonWorld **out);

/**
 * # Safety
 * `world` must be null or a live handle from [`fcps_cannon_world_new`].
 */
void fcps_cannon_world_free(struct FcpsCannonWorld *world);

/**
 * Terrain height at `(x, y)`.
 *
 * # Safety
 * `world` must be a live handle and `out` writable.
 */
enum FcpsStatus fcps_cannon_elevation(const struct FcpsCannonWorld *world,
                                      double x,
                                      double y,
                                      double *out);

/**
 * Noise-free shot with launch angles `alpha`, `beta` and speed `v`. Writes
 * the landing point to `landing[0..2]`.
 *
 * # Safety
 * `world` must be a live handle and `landing` must hold two doubles.
 */
enum FcpsStatus fcps_cannon_shoot(const struct FcpsCannonWorld *world,
                                  double alpha,
                                  double beta,
                                  double v,
                                  double *landing);

/**
 * Cannon reward for target `(tx, ty)` when the ball landed at `(lx, ly)`
 * after a launch at speed `v`.
 */
double fcps_cannon_reward(double tx, double ty, double lx, double ly, double v);

/**
 * Fit a GP to `n` row-major points of dimension `dim` with the given
 * squared-exponential hyperparameters.
 *
 * # Safety
 * `inputs` must hold `n * dim` doubles, `targets` `n`, `lengthscales`
 * `dim`; `out` must be writable.
 */
enum FcpsStatus fcps_gp_fit(const double *inputs,
                            const double *targets,
                            size_t n,
                            size_t dim,
                            double signal_variance,
                            const double *lengthscales,
                            double noise_variance,
                            struct FcpsGp **out);

/**
 * # Safety
 * `gp` must be null or a live handle from [`fcps_gp_fit`].
 */
void fcps_gp_free(struct FcpsGp *gp);

/**
 * Posterior mean and variance of the latent function at `x`.
 *
 * # Safety
 * `gp` must be live, `x` must hold the model's dimension, outputs writable.
 */
enum FcpsStatus fcps_gp_predict(const struct FcpsGp *gp,
                                const double *x,
                                double *mean,
                                double *variance);

/**
 * Negative log marginal likelihood of the data under the hyperparameters.
 *
 * # Safety
 * As for [`fcps_gp_fit`]; `out` must be writable.
 */
enum FcpsStatus fcps_gp_nlml(const double *inputs,
                             const double *targets,
                             size_t n,
                             size_t dim,
                             double signal_variance,
                             const double *lengthscales,
                             double noise_variance,
                             double *out);

/**
 * Maximize `objective` over the box `[lower, upper]` with DIRECT using at
 * most `max_evals` evaluations. Writes the best point to `best_x[0..dim]`.
 *
 * # Safety
 * `lower`, `upper` and `best_x` must hold `dim` doubles; `best_value`
 * must be writable; the callback must be safe to call with `user_data`.
 */
enum FcpsStatus fcps_direct_maximize(FcpsObjective objective,
                                     void *user_data,
                                     const double *lower,
                                     const double *upper,
                                     size_t dim,
                                     size_t max_evals,
                                     double *best_x,
                                     double *best_value);

/**
 * Run the experiment described by the JSON `config` and return the run
 * results as a JSON array in `*out_json` (free with [`fcps_string_free`]).
 *
 * # Safety
 * `config` must be a nul-terminated string; `out_json` writable.
 */
enum FcpsStatus fcps_run_experiment(const char *config, char **out_json);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FCPS_H */

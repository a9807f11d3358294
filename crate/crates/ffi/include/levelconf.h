#ifndef LEVELCONF_H
#define LEVELCONF_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Status codes; stable across releases.
 */
typedef enum LcStatus {
  LC_STATUS_OK = 0,
  LC_STATUS_NULL_POINTER = 1,
  LC_STATUS_INVALID_ARGUMENT = 2,
  LC_STATUS_DIMENSION_MISMATCH = 3,
  LC_STATUS_RANK_DEFICIENT = 4,
  LC_STATUS_SAMPLE_TOO_SMALL = 5,
  LC_STATUS_NON_FINITE = 6,
  LC_STATUS_INVALID_REGION = 7,
  LC_STATUS_NOT_POSITIVE_DEFINITE = 8,
  LC_STATUS_KIND_MISMATCH = 9,
  LC_STATUS_UNSUPPORTED = 10,
  LC_STATUS_IO = 11,
  LC_STATUS_INTERNAL = 12,
} LcStatus;

typedef enum LcSide {
  LC_SIDE_UPPER = 0,
  LC_SIDE_LOWER = 1,
  LC_SIDE_TWO_SIDED = 2,
} LcSide;

typedef enum LcShape {
  LC_SHAPE_HYPERBOLIC = 0,
  LC_SHAPE_CONSTANT_WIDTH = 1,
} LcShape;

typedef enum LcSetKind {
  LC_SET_KIND_G1U = 0,
  LC_SET_KIND_G1L = 1,
  LC_SET_KIND_G2U = 2,
  LC_SET_KIND_G2L = 3,
} LcSetKind;

typedef struct LcConstant LcConstant;

typedef struct LcFit LcFit;

typedef struct LcLevelSet LcLevelSet;

/*
 Monte Carlo settings. Zero in `grid_points_per_dim` or `workers` selects
 the default.
 */
typedef struct LcMcConfig {
  uintptr_t draws;
  uint64_t seed;
  uintptr_t workers;
  uintptr_t grid_points_per_dim;
  uintptr_t refine_iterations;
} LcMcConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message for the last failed call on this thread, or null. Valid until
 the next failing call on the same thread.
 */
const char *lc_last_error_message(void);

/*
 Default Monte Carlo settings for a region with `free_dims` free
 coordinates.
 */
struct LcMcConfig lc_mc_config_default(uintptr_t free_dims);

/*
 Least squares with an affine basis. `x` is row-major `n × d`.

 # Safety
 `y` must point to `n` doubles, `x` to `n * d` doubles and `out` to
 writable storage for one handle.
 */
enum LcStatus lc_fit_ols(const double *y,
                         const double *x,
                         uintptr_t n,
                         uintptr_t d,
                         struct LcFit **out);

/*
 Least squares on one covariate with the basis `1, x, …, x^degree`.

 # Safety
 As [`lc_fit_ols`] with `d = 1`.
 */
enum LcStatus lc_fit_ols_poly(const double *y,
                              const double *x,
                              uintptr_t n,
                              uintptr_t degree,
                              struct LcFit **out);

/*
 Known-scale estimate `β̂ ~ N(β, cov)` with an affine basis; `cov` is
 row-major `k × k` with `k = len(beta)`.

 # Safety
 `beta` must point to `k` doubles, `cov` to `k * k` doubles.
 */
enum LcStatus lc_fit_from_covariance(const double *beta,
                                     const double *cov,
                                     uintptr_t k,
                                     struct LcFit **out);

/*
 # Safety
 `fit` must be null or a handle from an `lc_fit_*` constructor, freed once.
 */
void lc_fit_free(struct LcFit *fit);

/*
 Number of coefficients.

 # Safety
 `fit` must be a live handle.
 */
enum LcStatus lc_fit_coefficient_count(const struct LcFit *fit, uintptr_t *out);

/*
 Copies `β̂` into `out[0..len]`; `len` must equal the coefficient count.

 # Safety
 `fit` must be a live handle and `out` must hold `len` doubles.
 */
enum LcStatus lc_fit_coefficients(const struct LcFit *fit, double *out, uintptr_t len);

/*
 `σ̂` and `ν` (infinite for a known scale).

 # Safety
 `fit` must be a live handle; outputs must be writable.
 */
enum LcStatus lc_fit_scale(const struct LcFit *fit, double *sigma_hat, double *dof);

/*
 Simulates the critical constant of one band over the box
 `[lower, upper]`. `config` may be null for defaults.

 # Safety
 `fit` must be a live handle, `lower`/`upper` must hold `dim` doubles.
 */
enum LcStatus lc_critical_constant(const struct LcFit *fit,
                                   const double *lower,
                                   const double *upper,
                                   uintptr_t dim,
                                   enum LcSide band_side,
                                   enum LcShape band_shape,
                                   double alpha,
                                   const struct LcMcConfig *config,
                                   struct LcConstant **out);

/*
 Wraps an externally known constant (no simulation).

 # Safety
 `lower`/`upper` must hold `dim` doubles.
 */
enum LcStatus lc_constant_fixed(double value,
                                const double *lower,
                                const double *upper,
                                uintptr_t dim,
                                enum LcSide band_side,
                                enum LcShape band_shape,
                                double alpha,
                                struct LcConstant **out);

/*
 Value and Monte Carlo standard error.

 # Safety
 `c` must be a live handle; outputs must be writable.
 */
enum LcStatus lc_constant_value(const struct LcConstant *c, double *value, double *std_error);

/*
 # Safety
 `c` must be null or a handle from an `lc_constant_*` constructor.
 */
void lc_constant_free(struct LcConstant *c);

/*
 Band bounds at `x`; the open side of a one-sided band is ±infinity.

 # Safety
 Handles must be live and `x` must hold `dim` doubles.
 */
enum LcStatus lc_band_at(const struct LcFit *fit,
                         const struct LcConstant *c,
                         const double *x,
                         uintptr_t dim,
                         double *lower,
                         double *upper);

/*
 Builds a confidence set for `{f ≥ λ}`, or for `{f ≤ λ}` when
 `sublevel` is non-zero.

 # Safety
 Handles must be live.
 */
enum LcStatus lc_level_set(const struct LcFit *fit,
                           const struct LcConstant *c,
                           double lambda,
                           enum LcSetKind set_kind,
                           int sublevel,
                           struct LcLevelSet **out);

/*
 Writes 1 if `x` belongs to the set, else 0.

 # Safety
 `set` must be live and `x` must hold `dim` doubles.
 */
enum LcStatus lc_level_set_contains(const struct LcLevelSet *set,
                                    const double *x,
                                    uintptr_t dim,
                                    int *out);

/*
 Writes 1 if the set is empty, else 0.

 # Safety
 `set` must be live.
 */
enum LcStatus lc_level_set_is_empty(const struct LcLevelSet *set, int *out);

/*
 Number of disjoint intervals of a one-dimensional set.

 # Safety
 `set` must be live.
 */
enum LcStatus lc_level_set_interval_count(const struct LcLevelSet *set, uintptr_t *out);

/*
 Endpoints of interval `index` (sorted ascending).

 # Safety
 `set` must be live; outputs must be writable.
 */
enum LcStatus lc_level_set_interval(const struct LcLevelSet *set,
                                    uintptr_t index,
                                    double *lo,
                                    double *hi);

/*
 # Safety
 `set` must be null or a handle from [`lc_level_set`].
 */
void lc_level_set_free(struct LcLevelSet *set);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LEVELCONF_H */

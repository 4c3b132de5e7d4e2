#ifndef WEIGHTED_OU_H
#define WEIGHTED_OU_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum WouStatus {
  WOU_STATUS_OK = 0,
  WOU_STATUS_NULL_POINTER = 1,
  WOU_STATUS_DOMAIN = 2,
  WOU_STATUS_NON_CONVERGENCE = 3,
  WOU_STATUS_NUMERICAL = 4,
  WOU_STATUS_PANIC = 5,
} WouStatus;

// Opaque test function.
typedef struct WouTestFn WouTestFn;

// Opaque convex weight.
typedef struct WouWeight WouWeight;

// Monte Carlo estimate.
typedef struct WouMcValue {
  double mean;
  double std_error;
  // Deterministic allowance (quadrature tail), 0 when not applicable.
  double bias_bound;
  uint64_t paths_used;
} WouMcValue;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread. Valid until the next
// failing call on the same thread; never null.
const char *wou_last_error(void);

// Library version as a static string.
const char *wou_version(void);

// Weight from a descriptor (`zero`, `quadratic:1,2`, `linear:..`, `l1[:s]`,
// `huber[:delta]`) in dimension `dim`.
//
// # Safety
// `desc` must be a NUL-terminated string and `out` a valid pointer.
enum WouStatus wou_weight_new(const char *desc, size_t dim, struct WouWeight **out);

// The Wiener energy weight on `modes` Karhunen-Loeve coordinates.
//
// # Safety
// `out` must be a valid pointer.
enum WouStatus wou_weight_energy(size_t modes, struct WouWeight **out);

// # Safety
// `w` must come from a `wou_weight_*` constructor and not be freed twice.
void wou_weight_free(struct WouWeight *w);

// # Safety
// `w` must be a live handle and `out` a valid pointer.
enum WouStatus wou_weight_dim(const struct WouWeight *w, size_t *out);

// Value at `x` and, if `grad` is non-null, a subgradient (length `n`).
//
// # Safety
// `x` (and `grad` when non-null) must hold `n` doubles.
enum WouStatus wou_weight_eval(const struct WouWeight *w,
                               const double *x,
                               size_t n,
                               double *value,
                               double *grad);

// Proximal point `P(x, alpha)`, envelope `f_alpha(x)` and its gradient
// `-P / alpha`. `minimizer` and `gradient` hold `n` doubles each; either may
// be null.
//
// # Safety
// Pointers must be valid for the stated lengths.
enum WouStatus wou_prox(const struct WouWeight *w,
                        const double *x,
                        size_t n,
                        double alpha,
                        double *minimizer,
                        double *envelope,
                        double *gradient);

// Test function by name (`const`, `tanh`, `tanh_slow`, `cos`, `indicator`,
// `linear`, `hermite2`) for an `n`-dimensional truncation.
//
// # Safety
// `name` must be NUL-terminated and `out` valid.
enum WouStatus wou_testfn_new(const char *name, size_t n, struct WouTestFn **out);

// # Safety
// `f` must come from `wou_testfn_new` and not be freed twice.
void wou_testfn_free(struct WouTestFn *f);

// # Safety
// `x` must hold `n` doubles; `out` valid.
enum WouStatus wou_testfn_eval(const struct WouTestFn *f, const double *x, size_t n, double *out);

// Monte Carlo `T_t f(x)` for the diffusion with drift `-(grad w + x)`.
//
// # Safety
// Handles live, `x` holds `n` doubles, `out` valid.
enum WouStatus wou_semigroup(const struct WouWeight *w,
                             const struct WouTestFn *f,
                             double t,
                             const double *x,
                             size_t n,
                             double dt,
                             size_t paths,
                             uint64_t seed,
                             struct WouMcValue *out);

// Monte Carlo `R(lambda) f(x)`; `bias_bound` carries the truncation tail.
//
// # Safety
// Handles live, `x` holds `n` doubles, `out` valid.
enum WouStatus wou_resolvent(const struct WouWeight *w,
                             const struct WouTestFn *f,
                             double lambda,
                             const double *x,
                             size_t n,
                             double dt,
                             size_t paths,
                             uint64_t seed,
                             struct WouMcValue *out);

// `lambda_k = 4 / (pi^2 (2k + 1)^2)`, zero-based `k`.
//
// # Safety
// `out` valid.
enum WouStatus wou_wiener_eigenvalue(size_t k, double *out);

// Cameron-Martin norm squared from `L2[0,1]` sine-basis coefficients.
//
// # Safety
// `coeffs` holds `n` doubles; `out` valid.
enum WouStatus wou_cm_norm_sq(const double *coeffs, size_t n, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* WEIGHTED_OU_H */

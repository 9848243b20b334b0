#ifndef RMTRATE_H
#define RMTRATE_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status code of every fallible call.
typedef enum RmtStatus {
  RMT_STATUS_OK = 0,
  RMT_STATUS_NULL_POINTER = 1,
  RMT_STATUS_INVALID_INPUT = 2,
  RMT_STATUS_OUT_OF_SUPPORT = 3,
  RMT_STATUS_DOMAIN_EXCEEDED = 4,
  RMT_STATUS_NON_CONVERGENCE = 5,
  RMT_STATUS_DEGENERATE_DENSITY = 6,
  RMT_STATUS_INVALID_SHAPE_RATIO = 7,
  RMT_STATUS_INSUFFICIENT_TAIL = 8,
  RMT_STATUS_IO = 9,
  RMT_STATUS_PANIC = 10,
} RmtStatus;

// Opaque ensemble handle.
typedef struct RmtEnsemble RmtEnsemble;

// Opaque rate-curve handle.
typedef struct RmtRateCurve RmtRateCurve;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// GOE with semicircle of radius `2σ`. `wall` is `NaN` for a wall at the
// edge, `+∞` for none, otherwise its position.
//
// # Safety
// `out` must be null or writable.
enum RmtStatus rmt_ensemble_new_goe(double sigma, double wall, struct RmtEnsemble **out);

// White Wishart of ratio `q ∈ (0, 1]`; `wall` as for the GOE.
//
// # Safety
// `out` must be null or writable.
enum RmtStatus rmt_ensemble_new_wishart(double q, double wall, struct RmtEnsemble **out);

// Point mass at `a` with a wall at `wall ≥ a` (`NaN` for `a`).
//
// # Safety
// `out` must be null or writable.
enum RmtStatus rmt_ensemble_new_dirac(double a, double wall, struct RmtEnsemble **out);

// Fixed diagonal whose spectrum is the piecewise-linear density through
// `len` nodes; the wall sits at the top of the support.
//
// # Safety
// `grid` and `values` must point to `len` readable doubles; `out` must be
// null or writable.
enum RmtStatus rmt_ensemble_new_tabulated(const double *grid,
                                          const double *values,
                                          size_t len,
                                          struct RmtEnsemble **out);

// # Safety
// `e` must be null or a handle not yet freed.
void rmt_ensemble_free(struct RmtEnsemble *e);

// Principal Stieltjes transform at `z ≥ a₊`.
//
// # Safety
// `e` must be a live handle; `out` must be null or writable.
enum RmtStatus rmt_stieltjes(const struct RmtEnsemble *e, double z, double *out);

// One-matrix rate of the top eigenvalue; `+∞` outside `[a₊, w]`.
//
// # Safety
// `e` must be a live handle; `out` must be null or writable.
enum RmtStatus rmt_psi_one(const struct RmtEnsemble *e, double x, double *out);

// Rate curve of the top eigenvalue of `A + OBOᵀ`. The ensembles are
// copied; they may be freed afterwards.
//
// # Safety
// `a`, `b` must be live handles; `out` must be null or writable.
enum RmtStatus rmt_rate_sum_new(const struct RmtEnsemble *a,
                                const struct RmtEnsemble *b,
                                struct RmtRateCurve **out);

// Rate curve of the top eigenvalue of `A^{1/2}OBOᵀA^{1/2}`.
//
// # Safety
// `a`, `b` must be live handles; `out` must be null or writable.
enum RmtStatus rmt_rate_prod_new(const struct RmtEnsemble *a,
                                 const struct RmtEnsemble *b,
                                 struct RmtRateCurve **out);

// # Safety
// `c` must be a live handle; `out` must be null or writable.
enum RmtStatus rmt_rate_curve_eval(const struct RmtRateCurve *c, double x, double *out);

// Typical edge, both critical points and the hard bound, in that order.
//
// # Safety
// `c` must be a live handle; `out` must be null or point to 4 writable doubles.
enum RmtStatus rmt_rate_curve_bounds(const struct RmtRateCurve *c, double *out);

// # Safety
// `c` must be null or a handle not yet freed.
void rmt_rate_curve_free(struct RmtRateCurve *c);

// Large-`n` rate of the top eigenvalue of `w_A·aaᵀ + w_B·bbᵀ`.
//
// # Safety
// `out` must be null or writable.
enum RmtStatus rmt_rk1rk1_rate(double wa, double wb, double x, double *out);

// Message of the last failure on this thread; empty if none. Valid until
// the next failing call on the same thread.
const char *rmt_last_error_message(void);

// Library version, static storage.
const char *rmt_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RMTRATE_H */

#ifndef STOCHMATCH_H
#define STOCHMATCH_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum SmStatus {
  SM_STATUS_OK = 0,
  SM_STATUS_NULL_POINTER = 1,
  SM_STATUS_INVALID_ARGUMENT = 2,
  SM_STATUS_VALIDATION = 3,
  SM_STATUS_IO = 4,
  SM_STATUS_PARSE = 5,
  SM_STATUS_NOT_KERNEL = 6,
  SM_STATUS_INTERNAL = 7,
} SmStatus;

// Activation function handle.
typedef struct SmActivation SmActivation;

// Kernel instance handle.
typedef struct SmKernel SmKernel;

// Analytic bounds of an activation function at `y* = 1 - ln 2`.
typedef struct SmRatioReport {
  double r1;
  double r2;
  double min;
  double cons1;
  double cons2;
  // `F(1)`
  double total;
  double t_star;
  // Every validity check passed, so `min` is a certified ratio.
  bool certified;
} SmRatioReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message describing the last failure on this thread, or NULL. The pointer
// stays valid until the next failing call on the same thread.
const char *sm_last_error_message(void);

// Builds an activation function from `m` values `f_1 ≤ … ≤ f_m` in `[0, 2]`.
//
// # Safety
// `values` must point to `m` readable doubles and `out` to a writable
// handle slot.
enum SmStatus sm_activation_new(const double *values, size_t m, struct SmActivation **out);

// # Safety
// `f` must be NULL or a handle from [`sm_activation_new`] not yet freed.
void sm_activation_free(struct SmActivation *f);

// Evaluates r1, r2, cons1, cons2 and the validity flags of `f`.
//
// # Safety
// `f` must be a live activation handle and `out` writable.
enum SmStatus sm_ratio_eval(const struct SmActivation *f, struct SmRatioReport *out);

// Parses an instance document with an `x` section and classifies it as a
// kernel instance.
//
// # Safety
// `json` must be a NUL-terminated string and `out` a writable handle slot.
enum SmStatus sm_kernel_from_json(const char *json, struct SmKernel **out);

// # Safety
// `k` must be NULL or a handle from [`sm_kernel_from_json`] not yet freed.
void sm_kernel_free(struct SmKernel *k);

// Number of edges of the kernel instance, 0 for NULL.
//
// # Safety
// `k` must be NULL or a live kernel handle.
size_t sm_kernel_num_edges(const struct SmKernel *k);

// Solves the LP of an instance document. The objective goes to
// `out_objective`; when `out_x` is non-NULL the optimal `x` is written in
// edge order (online types in input order, neighbours in list order) and
// `x_capacity` must be at least the number of edges.
//
// # Safety
// `json` must be NUL-terminated, `out_objective` writable and `out_x`
// NULL or valid for `x_capacity` writes.
enum SmStatus sm_lp_solve(const char *json,
                          double *out_objective,
                          double *out_x,
                          size_t x_capacity);

// Monte Carlo estimate of the smallest `Pr[M_ij = 1] / x_ij` over edges.
// With `f` NULL the engine is Suggested Matching, otherwise ESM with `f`.
//
// # Safety
// `k` must be a live kernel handle, `f` NULL or a live activation handle,
// and `out_ratio`, `out_se` writable.
enum SmStatus sm_estimate_min_ratio(const struct SmKernel *k,
                                    const struct SmActivation *f,
                                    uint64_t trials,
                                    uint64_t seed,
                                    double *out_ratio,
                                    double *out_se);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* STOCHMATCH_H */

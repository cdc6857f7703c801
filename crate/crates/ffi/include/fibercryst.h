#ifndef FIBERCRYST_H
#define FIBERCRYST_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Branch equation selector for [`fc_branch_roots`].
 */
typedef enum FcRegime {
  FC_REGIME_WEAK = 0,
  FC_REGIME_STRONG = 1,
  FC_REGIME_AVERAGED = 2,
} FcRegime;

/**
 * Result codes shared by all functions.
 */
typedef enum FcStatus {
  FC_STATUS_OK = 0,
  FC_STATUS_NULL_POINTER = 1,
  FC_STATUS_DOMAIN = 2,
  FC_STATUS_NUMERICAL = 3,
  FC_STATUS_CONVERGENCE = 4,
  FC_STATUS_BUFFER_TOO_SMALL = 5,
  FC_STATUS_IO = 6,
  FC_STATUS_PANIC = 7,
} FcStatus;

/**
 * Particle positions and momenta.
 */
typedef struct FcEnsemble FcEnsemble;

/**
 * A converged stationary field on its grid.
 */
typedef struct FcField FcField;

/**
 * Dimensionless parameters.
 */
typedef struct FcParams FcParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread into `buf` (nul-terminated,
 * truncated to `cap`). Returns the full message length in bytes, 0 if none.
 *
 * # Safety
 * `buf` must be null or point to `cap` writable bytes.
 */
size_t fc_last_error(char *buf, size_t cap);

/**
 * Critical pump ε_c = 1/(2ζ₀).
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum FcStatus fc_critical_pump(double zeta0, double *out);

/**
 * # Safety
 * `out` must be a valid pointer; on success `*out` owns a new handle.
 */
enum FcStatus fc_params_new(double zeta0,
                            double eps,
                            double ell,
                            size_t n_max,
                            struct FcParams **out);

/**
 * # Safety
 * `p` must be null or a handle from [`fc_params_new`] not yet freed.
 */
void fc_params_free(struct FcParams *p);

/**
 * Growth rate of mode `n`. `*unstable` is 1 and `*gamma` the rate when the
 * normal phase is unstable, otherwise 0 and 0.
 *
 * # Safety
 * All pointers must be valid.
 */
enum FcStatus fc_growth_rate(const struct FcParams *params,
                             size_t n,
                             double *gamma,
                             int32_t *unstable);

/**
 * Ordered-branch roots Θ of branch `n`, ascending. `*len` receives the root
 * count; if it exceeds `cap` nothing is copied and the status is
 * `BufferTooSmall`.
 *
 * # Safety
 * `out` must point to `cap` writable doubles (or be null with `cap` 0);
 * `len` must be valid.
 */
enum FcStatus fc_branch_roots(enum FcRegime regime,
                              double eps,
                              double zeta0,
                              size_t n,
                              double *out,
                              size_t cap,
                              size_t *len);

/**
 * Self-consistent stationary solution on branch `n` by continuation from
 * threshold. `ppw` is the number of grid points per wavelength (0 selects
 * the default).
 *
 * # Safety
 * `params` must be a live handle and `out` a valid pointer.
 */
enum FcStatus fc_field_solve(const struct FcParams *params,
                             size_t n,
                             size_t ppw,
                             struct FcField **out);

/**
 * Number of grid points of a field.
 *
 * # Safety
 * `f` must be null or a live handle.
 */
size_t fc_field_len(const struct FcField *f);

/**
 * Order parameter averaged over the central half of the cloud.
 *
 * # Safety
 * `f` must be a live handle and `theta` a valid pointer.
 */
enum FcStatus fc_field_theta(const struct FcField *f, double *theta);

/**
 * Copies grid positions and the real and imaginary field parts. Each buffer
 * must hold [`fc_field_len`] doubles; any of them may be null to skip it.
 *
 * # Safety
 * Non-null buffers must have room for `cap` doubles.
 */
enum FcStatus fc_field_copy(const struct FcField *f,
                            double *xi,
                            double *re,
                            double *im,
                            size_t cap);

/**
 * # Safety
 * `f` must be null or a live handle.
 */
void fc_field_free(struct FcField *f);

/**
 * Normal-phase sample of `n` particles (at least 1000).
 *
 * # Safety
 * `params` must be a live handle and `out` a valid pointer.
 */
enum FcStatus fc_ensemble_sample(const struct FcParams *params,
                                 size_t n,
                                 uint64_t seed,
                                 struct FcEnsemble **out);

/**
 * # Safety
 * `e` must be null or a live handle.
 */
size_t fc_ensemble_len(const struct FcEnsemble *e);

/**
 * Bunching |Σ e^{2iξ}|/N.
 *
 * # Safety
 * `e` must be a live handle and `out` a valid pointer.
 */
enum FcStatus fc_ensemble_bunching(const struct FcEnsemble *e, double *out);

/**
 * # Safety
 * `e` must be null or a live handle.
 */
void fc_ensemble_free(struct FcEnsemble *e);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FIBERCRYST_H */

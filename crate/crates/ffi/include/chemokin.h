#ifndef CHEMOKIN_H
#define CHEMOKIN_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum ChkStatus {
  CHK_STATUS_OK = 0,
  CHK_STATUS_NULL_POINTER = 1,
  CHK_STATUS_INVALID_PARAMETER = 2,
  CHK_STATUS_BUFFER_TOO_SMALL = 3,
  CHK_STATUS_RUNTIME = 4,
  CHK_STATUS_PANIC = 5,
} ChkStatus;

/**
 * Opaque continuum integrator.
 */
typedef struct ChkKs ChkKs;

/**
 * Opaque Monte Carlo simulation.
 */
typedef struct ChkMc ChkMc;

/**
 * Physical model parameters.
 */
typedef struct ChkParams {
  double k;
  double d;
  double chi;
  double delta;
} ChkParams;

typedef struct ChkDispersion {
  double lambda;
  /**
   * False when the real branch has no root at this wavenumber.
   */
  bool has_root;
  double mu1;
  bool unstable;
} ChkDispersion;

typedef struct ChkClassification {
  double stiffness_ratio;
  double critical_stiffness;
  double critical_lambda;
  bool unstable;
  /**
   * When set, `band_lo..band_hi` holds the unstable wavenumbers.
   */
  bool has_band;
  double band_lo;
  double band_hi;
  double most_unstable_lambda;
  double most_unstable_mu;
} ChkClassification;

typedef struct ChkMcConfig {
  struct ChkParams params;
  double length;
  size_t sites;
  double dt;
  size_t particles_per_site;
  uint64_t seed;
  bool growth;
  bool tumbling;
} ChkMcConfig;

/**
 * Continuum run in scaled units. `dt <= 0` selects the stability limit;
 * `initial_mode > 0` seeds a cosine of that mode instead of noise.
 */
typedef struct ChkKsConfig {
  double d_hat;
  double chi_hat;
  double delta_hat;
  double length;
  size_t sites;
  double dt;
  bool growth;
  double amplitude;
  size_t initial_mode;
  uint64_t seed;
} ChkKsConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copy the last error message of this thread into `buf` (NUL-terminated,
 * truncated to `len`). Returns the full message length in bytes.
 *
 * # Safety
 * `buf` must be null or valid for `len` bytes.
 */
size_t chk_last_error(char *buf, size_t len);

/**
 * Physical parameters of a named reference set (`"A"`..`"D"`) at `k`.
 *
 * # Safety
 * `name` must be a NUL-terminated string; `out` must be valid for writes.
 */
enum ChkStatus chk_named_set(const char *name, double k, struct ChkParams *out);

/**
 * Physical parameters from the scaled triple `(d/k, chi/sqrt(k), sqrt(k) delta)`.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum ChkStatus chk_scaled_params(double d_over_k,
                                 double chi_over_sqrt_k,
                                 double sqrt_k_delta,
                                 double k,
                                 struct ChkParams *out);

/**
 * Critical `F'(0)/k` for relaxation time `k` and diffusivity `d`, and the
 * wavenumber where it is attained.
 *
 * # Safety
 * Output pointers must be valid for writes; `out_lambda` may be null.
 */
enum ChkStatus chk_critical_stiffness(double k, double d, double *out_value, double *out_lambda);

/**
 * Real-branch growth rate at wavenumber `lambda`.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum ChkStatus chk_growth_rate(struct ChkParams params, double lambda, struct ChkDispersion *out);

/**
 * # Safety
 * `out` must be valid for writes.
 */
enum ChkStatus chk_classify(struct ChkParams params, struct ChkClassification *out);

/**
 * Solve `S - d S'' = rho` on a periodic lattice of `n` sites.
 *
 * # Safety
 * `rho` and `out_s` must each be valid for `n` values.
 */
enum ChkStatus chk_solve_chemoattractant(const double *rho,
                                         size_t n,
                                         double d,
                                         double dx,
                                         double *out_s);

/**
 * Power `|rho_hat|^2 / k` at modes `0..=n/2` into `out_power`
 * (`out_len >= n/2 + 1`).
 *
 * # Safety
 * `rho` must be valid for `n` values and `out_power` for `out_len`.
 */
enum ChkStatus chk_power_spectrum(const double *rho,
                                  size_t n,
                                  double dx,
                                  double k,
                                  double *out_power,
                                  size_t out_len);

/**
 * Create a Monte Carlo simulation at uniform density.
 *
 * # Safety
 * `cfg` must be readable and `out` valid for writes. The handle written to
 * `out` must be released with [`chk_mc_free`].
 */
enum ChkStatus chk_mc_new(const struct ChkMcConfig *cfg, struct ChkMc **out);

/**
 * Advance by `steps` time steps.
 *
 * # Safety
 * `mc` must be a live handle from [`chk_mc_new`].
 */
enum ChkStatus chk_mc_step(struct ChkMc *mc, uint64_t steps);

/**
 * Simulated time, or NaN for a null handle.
 *
 * # Safety
 * `mc` must be null or a live handle.
 */
double chk_mc_time(const struct ChkMc *mc);

/**
 * Live particle count, or 0 for a null handle.
 *
 * # Safety
 * `mc` must be null or a live handle.
 */
size_t chk_mc_particles(const struct ChkMc *mc);

/**
 * Copy the density profile (one value per site) into `out`.
 *
 * # Safety
 * `mc` must be a live handle and `out` valid for `len` values.
 */
enum ChkStatus chk_mc_density(const struct ChkMc *mc, double *out, size_t len);

/**
 * # Safety
 * `mc` must be null or a handle from [`chk_mc_new`] not yet freed.
 */
void chk_mc_free(struct ChkMc *mc);

/**
 * Create a continuum integrator.
 *
 * # Safety
 * `cfg` must be readable and `out` valid for writes. Release the handle
 * with [`chk_ks_free`].
 */
enum ChkStatus chk_ks_new(const struct ChkKsConfig *cfg, struct ChkKs **out);

/**
 * # Safety
 * `ks` must be a live handle from [`chk_ks_new`].
 */
enum ChkStatus chk_ks_step(struct ChkKs *ks, uint64_t steps);

/**
 * Time step in use, or NaN for a null handle.
 *
 * # Safety
 * `ks` must be null or a live handle.
 */
double chk_ks_dt(const struct ChkKs *ks);

/**
 * # Safety
 * `ks` must be null or a live handle.
 */
double chk_ks_time(const struct ChkKs *ks);

/**
 * # Safety
 * `ks` must be a live handle and `out` valid for `len` values.
 */
enum ChkStatus chk_ks_density(const struct ChkKs *ks, double *out, size_t len);

/**
 * # Safety
 * `ks` must be null or a handle from [`chk_ks_new`] not yet freed.
 */
void chk_ks_free(struct ChkKs *ks);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CHEMOKIN_H */

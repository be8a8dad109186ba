#ifndef QUADBATH_H
#define QUADBATH_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum QbStatus {
  QB_STATUS_OK = 0,
  QB_STATUS_NULL_POINTER = 1,
  QB_STATUS_INVALID_SPEC = 2,
  QB_STATUS_CONFIG = 3,
  QB_STATUS_UNSUPPORTED = 4,
  QB_STATUS_OUT_OF_RANGE = 5,
  QB_STATUS_NUMERICAL = 6,
  QB_STATUS_BUFFER_TOO_SMALL = 7,
  QB_STATUS_PANIC = 8,
} QbStatus;

/**
 * A computed reduced density matrix of dimension `n_cut + 1`.
 */
typedef struct QbRho QbRho;

/**
 * Scenario under construction. Validated when it is used.
 */
typedef struct QbSpec QbSpec;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread into `buf` (NUL-terminated,
 * truncated to `len`). Returns the full message length without the NUL.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t qb_last_error_message(char *buf, size_t len);

/**
 * Isolated, undriven oscillator with two-photon coupling `φ = i·phi_im` at
 * inverse temperature `beta` (`INFINITY` for zero temperature).
 *
 * # Safety
 * `out` must be a valid pointer to a `QbSpec*`.
 */
enum QbStatus qb_spec_new(double omega0, double phi_im, double beta, struct QbSpec **out);

/**
 * Parses a scenario in the `quadbath` TOML format; only the physical
 * sections are used.
 *
 * # Safety
 * `toml` must be a NUL-terminated string; `out` a valid `QbSpec*` slot.
 */
enum QbStatus qb_spec_from_toml(const char *toml, struct QbSpec **out);

/**
 * # Safety
 * `spec` must be null or a handle from this library, freed at most once.
 */
void qb_spec_free(struct QbSpec *spec);

/**
 * `k(t) = k0 sin(ν t)`.
 *
 * # Safety
 * `spec` must be a live handle.
 */
enum QbStatus qb_spec_set_sinusoidal_drive(struct QbSpec *spec, double k0, double nu);

/**
 * Appends a discrete bath mode. Replaces a memoryless bath.
 *
 * # Safety
 * `spec` must be a live handle.
 */
enum QbStatus qb_spec_add_bath_mode(struct QbSpec *spec,
                                    double omega,
                                    double coupling_re,
                                    double coupling_im);

/**
 * `χ(t) = χ₀ δ(t)`. Replaces any discrete modes.
 *
 * # Safety
 * `spec` must be a live handle.
 */
enum QbStatus qb_spec_set_memoryless_bath(struct QbSpec *spec, double chi0);

/**
 * Reduced density matrix at time `t` from the initial coherent amplitude
 * `γ`. A negative `n_cut` picks the cutoff from the tail rule.
 *
 * # Safety
 * `spec` must be a live handle; `out` a valid `QbRho*` slot.
 */
enum QbStatus qb_rho_compute(const struct QbSpec *spec,
                             double gamma_re,
                             double gamma_im,
                             double t,
                             int64_t n_cut,
                             struct QbRho **out);

/**
 * Matrix dimension (`n_cut + 1`); 0 for a null handle.
 *
 * # Safety
 * `rho` must be null or a live handle.
 */
size_t qb_rho_dim(const struct QbRho *rho);

/**
 * `1 - Tr ρ` of the truncated matrix; NaN for a null handle.
 *
 * # Safety
 * `rho` must be null or a live handle.
 */
double qb_rho_trace_deficit(const struct QbRho *rho);

/**
 * Element `ρ_nm`.
 *
 * # Safety
 * `rho` must be a live handle; `re`, `im` valid `double*`.
 */
enum QbStatus qb_rho_get(const struct QbRho *rho, size_t n, size_t m, double *re, double *im);

/**
 * Writes the matrix row-major as interleaved `re, im` pairs; `len` counts
 * doubles and must be at least `2·dim²`.
 *
 * # Safety
 * `rho` must be a live handle; `buf` must point to `len` writable doubles.
 */
enum QbStatus qb_rho_copy(const struct QbRho *rho, double *buf, size_t len);

/**
 * # Safety
 * `rho` must be null or a handle from this library, freed at most once.
 */
void qb_rho_free(struct QbRho *rho);

/**
 * Excitation probabilities `P_0 … P_{n_max}` at time `t`, written to `out`
 * (`n_max + 1` doubles). Uses the displaced-thermal closed form when the
 * two-photon coupling vanishes and the density-matrix diagonal otherwise.
 *
 * # Safety
 * `spec` must be a live handle; `out` must point to `n_max + 1` doubles.
 */
enum QbStatus qb_pn(const struct QbSpec *spec,
                    double gamma_re,
                    double gamma_im,
                    double t,
                    size_t n_max,
                    double *out);

/**
 * Library version, static NUL-terminated string.
 */
const char *qb_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* QUADBATH_H */

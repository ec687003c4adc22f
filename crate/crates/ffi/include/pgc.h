#ifndef PGC_H
#define PGC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Symmetry class codes returned by [`pgc_crystal_mode`].
 */
typedef enum PgcModeClass {
  PGC_MODE_CLASS_AXIAL = 0,
  PGC_MODE_CLASS_RADIAL_X = 1,
  PGC_MODE_CLASS_RADIAL_Y = 2,
  PGC_MODE_CLASS_IN_PLANE = 3,
  PGC_MODE_CLASS_OUT_OF_PLANE = 4,
} PgcModeClass;

typedef enum PgcStatus {
  PGC_STATUS_OK = 0,
  PGC_STATUS_NULL_POINTER = 1,
  PGC_STATUS_INVALID_STRING = 2,
  PGC_STATUS_OUT_OF_RANGE = 3,
  PGC_STATUS_DOMAIN = 4,
  PGC_STATUS_FIT_FAILURE = 5,
  PGC_STATUS_INTEGRATOR = 6,
  PGC_STATUS_OPTIMIZATION = 7,
  PGC_STATUS_STRUCTURAL_INSTABILITY = 8,
  PGC_STATUS_NON_FINITE = 9,
  PGC_STATUS_BUDGET = 10,
  PGC_STATUS_CONFIG = 11,
  PGC_STATUS_IO = 12,
  PGC_STATUS_PANIC = 13,
} PgcStatus;

/**
 * Equilibrium and normal modes of an ion crystal.
 */
typedef struct PgcCrystal PgcCrystal;

/**
 * Single-ion master-equation model.
 */
typedef struct PgcLindblad PgcLindblad;

/**
 * Cooling rate (1/s), heating rate (quanta/s) and steady-state occupation.
 */
typedef struct PgcRates {
  double cooling_rate;
  double heating_rate;
  double n_steady;
} PgcRates;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *pgc_version(void);

/**
 * Copy the last error message of this thread into `buf` (NUL-terminated,
 * truncated to `len`). Returns the full message length without the NUL.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t pgc_last_error(char *buf, size_t len);

/**
 * Semiclassical occupation limit at fixed gradient phase zero.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum PgcStatus pgc_limit_fixed_phase(double xi, double *out);

/**
 * Semiclassical occupation limit averaged over the gradient phase.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum PgcStatus pgc_limit_phase_averaged(double xi, double *out);

/**
 * Rates at gradient phase `phase` for Lamb-Dicke parameter `eta`,
 * saturation `s` and potential depth `xi`.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum PgcStatus pgc_rates(double eta,
                         double s,
                         double xi,
                         double linewidth_hz,
                         double phase,
                         struct PgcRates *out);

/**
 * Phase-averaged rates, see [`pgc_rates`].
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum PgcStatus pgc_phase_averaged_rates(double eta,
                                        double s,
                                        double xi,
                                        double linewidth_hz,
                                        struct PgcRates *out);

/**
 * Crystal of `ions` ⁴⁰Ca⁺ ions. A zero radial frequency means that axis
 * is unconfined; `wavelength_m` sets the axial Lamb-Dicke matrix.
 *
 * # Safety
 * `out` must be a valid pointer; the handle is released with
 * [`pgc_crystal_free`].
 */
enum PgcStatus pgc_crystal_new(size_t ions,
                               double omega_z_hz,
                               double omega_x_hz,
                               double omega_y_hz,
                               double q_z,
                               double wavelength_m,
                               struct PgcCrystal **out);

/**
 * # Safety
 * `crystal` must be null or a handle from [`pgc_crystal_new`], not used
 * afterwards.
 */
void pgc_crystal_free(struct PgcCrystal *crystal);

/**
 * Ion count, mode count (3N) and whether the crystal is planar.
 *
 * # Safety
 * `crystal` must be a live handle; output pointers may be null.
 */
enum PgcStatus pgc_crystal_info(const struct PgcCrystal *crystal,
                                size_t *ions,
                                size_t *modes,
                                bool *planar);

/**
 * Equilibrium position of ion `ion` in metres, written to `xyz[0..3]`.
 *
 * # Safety
 * `crystal` must be a live handle and `xyz` point to three doubles.
 */
enum PgcStatus pgc_crystal_position(const struct PgcCrystal *crystal, size_t ion, double *xyz);

/**
 * Frequency (Hz) and class of mode `mode`, modes in ascending frequency.
 *
 * # Safety
 * `crystal` must be a live handle; output pointers must be valid.
 */
enum PgcStatus pgc_crystal_mode(const struct PgcCrystal *crystal,
                                size_t mode,
                                double *freq_hz,
                                enum PgcModeClass *class_);

/**
 * Single-ion model at potential depth `xi`, detuning 2π × `detuning_hz`
 * and `n_max` Fock states; `wavelength_scale` stretches the cooling
 * wavelength to shrink the Lamb-Dicke parameter.
 *
 * # Safety
 * `out` must be a valid pointer; the handle is released with
 * [`pgc_lindblad_free`].
 */
enum PgcStatus pgc_lindblad_new(size_t n_max,
                                double omega_z_hz,
                                double detuning_hz,
                                double xi,
                                double wavelength_scale,
                                struct PgcLindblad **out);

/**
 * # Safety
 * `model` must be null or a handle from [`pgc_lindblad_new`], not used
 * afterwards.
 */
void pgc_lindblad_free(struct PgcLindblad *model);

/**
 * Cool from the motional ground state at fixed `phase` for
 * `time_constants` semiclassical cooling times and extract the rates.
 * `n_steady` is the occupation plateau at this cutoff.
 *
 * # Safety
 * `model` must be a live handle and `out` a valid pointer.
 */
enum PgcStatus pgc_lindblad_rates(const struct PgcLindblad *model,
                                  double phase,
                                  double time_constants,
                                  struct PgcRates *out);

/**
 * Run a scenario file or bundled scenario as `pgc <task>` would. `task`
 * is one of semiclassical, lindblad, crystal, thermometry-simulate or
 * thermometry-fit. `out_dir` may be null; `jobs` 0 uses all cores.
 *
 * # Safety
 * String arguments must be NUL-terminated.
 */
enum PgcStatus pgc_run_scenario(const char *task,
                                const char *scenario,
                                const char *out_dir,
                                size_t jobs);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PGC_H */

#ifndef VDC_FFI_H
#define VDC_FFI_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum VdcStatus {
  VDC_STATUS_OK = 0,
  VDC_STATUS_NULL_POINTER = 1,
  VDC_STATUS_INVALID_UTF8 = 2,
  VDC_STATUS_CONFIG_ERROR = 3,
  VDC_STATUS_DIVERGED = 4,
  VDC_STATUS_NUMERICAL_ERROR = 5,
  VDC_STATUS_IO_ERROR = 6,
  VDC_STATUS_BUFFER_TOO_SMALL = 7,
  VDC_STATUS_FINISHED = 8,
  VDC_STATUS_PANIC = 9,
} VdcStatus;

/**
 * Opaque simulation handle.
 */
typedef struct VdcSimulation VdcSimulation;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Builds a simulation from configuration text.
 *
 * # Safety
 * `toml` must be a NUL-terminated string and `out` a writable pointer.
 */
enum VdcStatus vdc_simulation_from_toml(const char *toml, struct VdcSimulation **out);

/**
 * Builds a simulation from a configuration file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a writable pointer.
 */
enum VdcStatus vdc_simulation_from_path(const char *path, struct VdcSimulation **out);

/**
 * Releases a handle. Null is ignored.
 *
 * # Safety
 * `sim` must come from one of the constructors and not be used afterwards.
 */
void vdc_simulation_free(struct VdcSimulation *sim);

/**
 * Advances one control period. Returns `Finished` once the configured
 * duration has elapsed.
 *
 * # Safety
 * `sim` must be a live handle.
 */
enum VdcStatus vdc_simulation_step(struct VdcSimulation *sim);

/**
 * Runs the remaining steps.
 *
 * # Safety
 * `sim` must be a live handle.
 */
enum VdcStatus vdc_simulation_run(struct VdcSimulation *sim);

/**
 * Current simulation time in seconds.
 *
 * # Safety
 * `sim` must be a live handle and `out` writable.
 */
enum VdcStatus vdc_simulation_time(const struct VdcSimulation *sim, double *out);

/**
 * Writes 1 to `out` when no further steps will run, else 0.
 *
 * # Safety
 * `sim` must be a live handle and `out` writable.
 */
enum VdcStatus vdc_simulation_is_finished(const struct VdcSimulation *sim, int32_t *out);

/**
 * Sliding-surface vector of the last step (zeros before the first step).
 *
 * # Safety
 * `sim` must be a live handle and `out` must hold 6 doubles.
 */
enum VdcStatus vdc_simulation_upsilon(const struct VdcSimulation *sim, double *out);

/**
 * Length of each plant state vector: joint count for a chain, 6 for the
 * ideal Cartesian plant.
 *
 * # Safety
 * `sim` must be a live handle and `out` writable.
 */
enum VdcStatus vdc_simulation_state_len(const struct VdcSimulation *sim, size_t *out);

/**
 * Copies positions and velocities of the plant into two arrays of `len`
 * doubles each.
 *
 * # Safety
 * `sim` must be a live handle; `pos` and `vel` must hold `len` doubles.
 */
enum VdcStatus vdc_simulation_state(const struct VdcSimulation *sim,
                                    double *pos,
                                    double *vel,
                                    size_t len);

/**
 * Run summary as JSON. `needed` receives the size including the NUL; pass
 * a null buffer to query it.
 *
 * # Safety
 * `sim` must be a live handle; `buf` must hold `len` bytes or be null.
 */
enum VdcStatus vdc_simulation_summary_json(const struct VdcSimulation *sim,
                                           char *buf,
                                           size_t len,
                                           size_t *needed);

/**
 * Allocator gains of the configuration's impedance section, each as 36
 * column-major doubles.
 *
 * # Safety
 * `toml` must be NUL-terminated; each output must hold 36 doubles.
 */
enum VdcStatus vdc_gains_from_toml(const char *toml,
                                   double *gamma_p,
                                   double *gamma_v,
                                   double *gamma_f);

/**
 * Message of the last failure on this thread, with the same buffer
 * protocol as [`vdc_simulation_summary_json`].
 *
 * # Safety
 * `buf` must hold `len` bytes or be null.
 */
enum VdcStatus vdc_last_error(char *buf, size_t len, size_t *needed);

/**
 * Static description of a status code.
 */
const char *vdc_status_name(enum VdcStatus status);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VDC_FFI_H */

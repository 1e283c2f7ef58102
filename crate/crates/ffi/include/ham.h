#ifndef HAM_H
#define HAM_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define HAM_METHOD_EULER 0

#define HAM_METHOD_RK4 1

/**
 * Result code of every fallible call.
 */
typedef enum HamStatus {
  HAM_STATUS_OK = 0,
  HAM_STATUS_NULL_POINTER = 1,
  HAM_STATUS_INVALID_ARGUMENT = 2,
  HAM_STATUS_INVALID_NETWORK = 3,
  HAM_STATUS_SHAPE_MISMATCH = 4,
  HAM_STATUS_NUMERICAL = 5,
  HAM_STATUS_IO = 6,
  HAM_STATUS_PARSE = 7,
  HAM_STATUS_PANIC = 8,
} HamStatus;

/**
 * Opaque network handle.
 */
typedef struct HamNetwork HamNetwork;

/**
 * Integrator settings; fill with [`ham_integrator_default`].
 */
typedef struct HamIntegrator {
  /**
   * `HAM_METHOD_EULER` or `HAM_METHOD_RK4`.
   */
  uint32_t method;
  double dt;
  /**
   * Nonzero enables step halving on energy increase.
   */
  uint8_t adaptive;
  double convergence_eps;
  size_t max_steps;
  /**
   * Nonzero holds the input layer fixed.
   */
  uint8_t clamp_input;
} HamIntegrator;

/**
 * Summary of a relaxation.
 */
typedef struct HamRelaxResult {
  uint8_t converged;
  size_t steps;
  double energy_initial;
  double energy_final;
} HamRelaxResult;

/**
 * Outcome of a retrieval.
 */
typedef struct HamRecallReport {
  double overlap;
  size_t bit_error;
  uint8_t converged;
  size_t steps;
  double energy_initial;
  double energy_final;
} HamRecallReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the last failure on this thread, or an empty string.
 * The pointer stays valid until the next `ham_*` call on this thread.
 */
const char *ham_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *ham_version(void);

/**
 * Loads and validates a binary network container.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a writable pointer.
 */
enum HamStatus ham_network_load(const char *path, struct HamNetwork **out);

/**
 * Decodes a binary network container held in memory.
 *
 * # Safety
 * `bytes` must point to `len` readable bytes and `out` must be writable.
 */
enum HamStatus ham_network_from_bytes(const uint8_t *bytes, size_t len, struct HamNetwork **out);

/**
 * Parses a network from TOML text with `[[layer]]` and `[[connection]]` tables.
 *
 * # Safety
 * `text` must be a NUL-terminated string and `out` a writable pointer.
 */
enum HamStatus ham_network_from_toml(const char *text, struct HamNetwork **out);

/**
 * Writes the network as a binary container.
 *
 * # Safety
 * `network` must come from a `ham_network_*` constructor; `path` must be NUL-terminated.
 */
enum HamStatus ham_network_save(const struct HamNetwork *network, const char *path);

/**
 * Releases a handle. Null is ignored.
 *
 * # Safety
 * `network` must be null or an unreleased handle from a `ham_network_*` constructor.
 */
void ham_network_free(struct HamNetwork *network);

/**
 * Number of layers, or 0 for a null handle.
 *
 * # Safety
 * `network` must be null or a live handle.
 */
size_t ham_network_layer_count(const struct HamNetwork *network);

/**
 * Number of units in `layer` (0-based), or 0 when out of range.
 *
 * # Safety
 * `network` must be null or a live handle.
 */
size_t ham_network_layer_len(const struct HamNetwork *network, size_t layer);

/**
 * Length of the flat state buffer.
 *
 * # Safety
 * `network` must be null or a live handle.
 */
size_t ham_network_state_len(const struct HamNetwork *network);

/**
 * Nonzero when the top layer has `tau = 0`.
 *
 * # Safety
 * `network` must be null or a live handle.
 */
uint8_t ham_network_is_adiabatic(const struct HamNetwork *network);

/**
 * Default integrator for this network.
 *
 * # Safety
 * `network` must be a live handle and `out` writable.
 */
enum HamStatus ham_integrator_default(const struct HamNetwork *network, struct HamIntegrator *out);

/**
 * Global energy of a flat state.
 *
 * # Safety
 * `state` must hold `len` doubles and `out` be writable.
 */
enum HamStatus ham_energy(const struct HamNetwork *network,
                          const double *state,
                          size_t len,
                          double *out);

/**
 * Analytic `dE/dt` at a flat state.
 *
 * # Safety
 * `state` must hold `len` doubles and `out` be writable.
 */
enum HamStatus ham_energy_rate(const struct HamNetwork *network,
                               const double *state,
                               size_t len,
                               double *out);

/**
 * Writes `dx/dt` for every layer into `out`; an adiabatic top layer gets zeros.
 *
 * # Safety
 * `state` and `out` must each hold `len` doubles.
 */
enum HamStatus ham_velocity(const struct HamNetwork *network,
                            const double *state,
                            size_t len,
                            double *out);

/**
 * Sets the adiabatic top layer of `state` to its fixed point, in place.
 *
 * # Safety
 * `state` must hold `len` writable doubles.
 */
enum HamStatus ham_equilibrate_top(const struct HamNetwork *network, double *state, size_t len);

/**
 * Relaxes `state` in place. `cfg` may be null for the defaults; `result`
 * may be null.
 *
 * # Safety
 * `state` must hold `len` writable doubles; `cfg` and `result` must be
 * null or valid.
 */
enum HamStatus ham_relax(const struct HamNetwork *network,
                         double *state,
                         size_t len,
                         const struct HamIntegrator *cfg,
                         struct HamRelaxResult *result);

/**
 * Retrieves from `cue` (input layer; hidden layers start at zero), writes
 * the relaxed input layer to `retrieved` and scores it against `target`,
 * or against the cue when `target` is null.
 *
 * # Safety
 * `cue`, `target` (unless null) and `retrieved` must each hold `len`
 * doubles; `cfg` may be null; `report` may be null.
 */
enum HamStatus ham_retrieve(const struct HamNetwork *network,
                            const double *cue,
                            const double *target,
                            size_t len,
                            const struct HamIntegrator *cfg,
                            double *retrieved,
                            struct HamRecallReport *report);

/**
 * Binary container bytes of a network. On success `*bytes` owns `*len`
 * bytes that must be released with [`ham_bytes_free`].
 *
 * # Safety
 * `bytes` and `len` must be writable.
 */
enum HamStatus ham_network_to_bytes(const struct HamNetwork *network, uint8_t **bytes, size_t *len);

/**
 * Releases a buffer from [`ham_network_to_bytes`]. Null is ignored.
 *
 * # Safety
 * `bytes`/`len` must be exactly what [`ham_network_to_bytes`] returned.
 */
void ham_bytes_free(uint8_t *bytes, size_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HAM_H */

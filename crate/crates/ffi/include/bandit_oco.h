#ifndef BANDIT_OCO_H
#define BANDIT_OCO_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible function.
 */
typedef enum {
  BOC_STATUS_OK = 0,
  BOC_STATUS_NULL_POINTER = 1,
  BOC_STATUS_INVALID_UTF8 = 2,
  BOC_STATUS_CONFIG = 3,
  BOC_STATUS_PARAMETER = 4,
  BOC_STATUS_DIMENSION = 5,
  BOC_STATUS_FEASIBILITY = 6,
  BOC_STATUS_SOLVER = 7,
  BOC_STATUS_UNSUPPORTED_LOSS = 8,
  BOC_STATUS_INSUFFICIENT_DATA = 9,
  BOC_STATUS_IO = 10,
  BOC_STATUS_OUT_OF_RANGE = 11,
  BOC_STATUS_BUFFER_TOO_SMALL = 12,
  BOC_STATUS_PANIC = 13,
} BocStatus;

/**
 * Which vector of a round to copy; passed to [`boc_trace_vector`] as a
 * plain integer.
 */
typedef enum {
  /**
   * The iterate `x_t`.
   */
  BOC_VECTOR_ITERATE = 0,
  /**
   * The direction `u_t`.
   */
  BOC_VECTOR_DIRECTION = 1,
  /**
   * The estimate `g_t`.
   */
  BOC_VECTOR_GRADIENT = 2,
} BocVector;

/**
 * Opaque run configuration.
 */
typedef struct BocConfig BocConfig;

/**
 * Opaque random stream.
 */
typedef struct BocRandom BocRandom;

/**
 * Opaque completed run.
 */
typedef struct BocTrace BocTrace;

/**
 * Scalars of one round.
 */
typedef struct {
  size_t t;
  double value_plus;
  double value_minus;
  double g_norm_sq;
  double eta;
} BocRound;

/**
 * Regret against a comparator point.
 */
typedef struct {
  double player_cost;
  double comparator_cost;
  double regret;
  /**
   * `Σ ‖g_t‖² / (μ t)`
   */
  double weighted_gsum;
} BocRegret;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Version of the trace and summary file formats.
 */
uint32_t boc_format_version(void);

/**
 * Copies the calling thread's last error message into `buf` (NUL
 * terminated, truncated to `len − 1` bytes). Returns the full message length
 * in bytes, excluding the terminator.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t boc_last_error(char *buf, size_t len);

/**
 * Parses a run configuration from JSON.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be writable.
 */
BocStatus boc_config_from_json(const char *json, BocConfig **out);

/**
 * Writes the resolved configuration as JSON into `buf`. `needed` receives
 * the length including the terminator; pass a null `buf` to query it.
 *
 * # Safety
 * `config` must be a live handle; `buf` null or `len` writable bytes;
 * `needed` null or writable.
 */
BocStatus boc_config_to_json(const BocConfig *config, char *buf, size_t len, size_t *needed);

/**
 * # Safety
 * `config` must be a live handle.
 */
BocStatus boc_config_set_seed(BocConfig *config, uint64_t seed, uint64_t stream_id);

/**
 * Dimension of the configured game, 0 for a null handle.
 *
 * # Safety
 * `config` must be null or a live handle.
 */
size_t boc_config_dim(const BocConfig *config);

/**
 * Projects `x` onto `(1 − xi)K` for the configuration's body.
 *
 * # Safety
 * `x` and `out` must hold `dim` values.
 */
BocStatus boc_config_project(const BocConfig *config,
                             double xi,
                             const double *x,
                             double *out,
                             size_t dim);

/**
 * # Safety
 * `config` must be null or a handle from this library, not yet freed.
 */
void boc_config_free(BocConfig *config);

/**
 * Plays the configured game to its horizon.
 *
 * # Safety
 * `config` must be a live handle; `out` writable.
 */
BocStatus boc_run(const BocConfig *config, BocTrace **out);

/**
 * Number of rounds, 0 for a null handle.
 *
 * # Safety
 * `trace` must be null or a live handle.
 */
size_t boc_trace_rounds(const BocTrace *trace);

/**
 * # Safety
 * `trace` must be null or a live handle.
 */
size_t boc_trace_dim(const BocTrace *trace);

/**
 * Scalars of round `index` (0-based; `t = index + 1`).
 *
 * # Safety
 * `trace` must be a live handle; `out` writable.
 */
BocStatus boc_trace_round(const BocTrace *trace, size_t index, BocRound *out);

/**
 * Copies one vector of round `index` into `out`.
 *
 * # Safety
 * `trace` must be a live handle; `out` must hold `len` values.
 */
BocStatus boc_trace_vector(const BocTrace *trace,
                           size_t index,
                           uint32_t which,
                           double *out,
                           size_t len);

/**
 * Best fixed point in hindsight over the body.
 *
 * # Safety
 * `trace` must be a live handle; `out` must hold `len` values.
 */
BocStatus boc_trace_comparator(const BocTrace *trace, double *out, size_t len);

/**
 * Regret against `x_star`; pass null to use the best fixed point.
 *
 * # Safety
 * `trace` must be a live handle; `x_star` null or `dim` values; `out`
 * writable.
 */
BocStatus boc_trace_regret(const BocTrace *trace, const double *x_star, BocRegret *out);

/**
 * # Safety
 * `trace` must be null or a handle from this library, not yet freed.
 */
void boc_trace_free(BocTrace *trace);

/**
 * Opens the random stream `(seed, stream_id)`.
 *
 * # Safety
 * `out` must be writable.
 */
BocStatus boc_random_new(uint64_t seed, uint64_t stream_id, BocRandom **out);

/**
 * Draws a point uniformly from the unit sphere in `R^dim`.
 *
 * # Safety
 * `rng` must be a live handle; `out` must hold `dim` values.
 */
BocStatus boc_random_sphere(BocRandom *rng, double *out, size_t dim);

/**
 * # Safety
 * `rng` must be null or a handle from this library, not yet freed.
 */
void boc_random_free(BocRandom *rng);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BANDIT_OCO_H */

#ifndef OTAFL_H
#define OTAFL_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum OtaflStatus {
  OTAFL_STATUS_OK = 0,
  OTAFL_STATUS_NULL_POINTER = 1,
  OTAFL_STATUS_INVALID_UTF8 = 2,
  OTAFL_STATUS_CONFIG = 3,
  OTAFL_STATUS_DOMAIN = 4,
  OTAFL_STATUS_CONTRACT = 5,
  OTAFL_STATUS_NUMERICAL = 6,
  OTAFL_STATUS_IO = 7,
  OTAFL_STATUS_INGESTION = 8,
  OTAFL_STATUS_OUT_OF_RANGE = 9,
  OTAFL_STATUS_BUFFER_TOO_SMALL = 10,
  OTAFL_STATUS_PANIC = 11,
  OTAFL_STATUS_OTHER = 12,
} OtaflStatus;

/**
 * Opaque simulation configuration.
 */
typedef struct OtaflConfig OtaflConfig;

/**
 * Opaque finished run.
 */
typedef struct OtaflRun OtaflRun;

/**
 * Scalar metrics of one round. Absent values are NaN.
 */
typedef struct OtaflRoundSummary {
  size_t t;
  size_t n_active;
  double alpha;
  double error_sq;
  double phi;
  double global_loss;
  double test_accuracy;
  double cumulative_energy;
  double cumulative_consumed;
} OtaflRoundSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer
 * stays valid until the next call into this library on the same thread.
 */
const char *otafl_last_error_message(void);

/**
 * Default configuration. Never null.
 */
struct OtaflConfig *otafl_config_default(void);

/**
 * Parses a TOML document.
 *
 * # Safety
 * `toml` must be a NUL-terminated string; `out` must be writable.
 */
enum OtaflStatus otafl_config_from_str(const char *toml, struct OtaflConfig **out);

/**
 * Reads a TOML config file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum OtaflStatus otafl_config_from_file(const char *path, struct OtaflConfig **out);

/**
 * Sets one key using the same syntax as a `--set key=value` override.
 * The configuration is left unchanged if the result fails validation.
 *
 * # Safety
 * `cfg` must come from this library; `key` and `value` must be
 * NUL-terminated strings.
 */
enum OtaflStatus otafl_config_set(struct OtaflConfig *cfg, const char *key, const char *value);

/**
 * Serializes the configuration as TOML. Free with [`otafl_string_free`].
 *
 * # Safety
 * `cfg` must come from this library or be null.
 */
char *otafl_config_to_string(const struct OtaflConfig *cfg);

/**
 * # Safety
 * `cfg` must come from this library (or be null) and not be used afterwards.
 */
void otafl_config_free(struct OtaflConfig *cfg);

/**
 * # Safety
 * `s` must come from this library (or be null).
 */
void otafl_string_free(char *s);

/**
 * Runs the simulation to completion.
 *
 * # Safety
 * `cfg` must come from this library; `out` must be writable.
 */
enum OtaflStatus otafl_run(const struct OtaflConfig *cfg, struct OtaflRun **out);

/**
 * # Safety
 * `run` must come from this library (or be null) and not be used afterwards.
 */
void otafl_run_free(struct OtaflRun *run);

/**
 * Number of recorded rounds; 0 for a null handle.
 *
 * # Safety
 * `run` must come from this library or be null.
 */
size_t otafl_run_num_rounds(const struct OtaflRun *run);

/**
 * Scalar metrics of round `index` (0-based).
 *
 * # Safety
 * `run` must come from this library; `out` must be writable.
 */
enum OtaflStatus otafl_run_round(const struct OtaflRun *run,
                                 size_t index,
                                 struct OtaflRoundSummary *out);

/**
 * Test accuracy at the last evaluated round.
 *
 * # Safety
 * `run` must come from this library; `out` must be writable.
 */
enum OtaflStatus otafl_run_final_accuracy(const struct OtaflRun *run, double *out);

/**
 * Copies the final model into `buf`. `*len_out` always receives the model
 * length; pass a null `buf` to query it.
 *
 * # Safety
 * `buf` must hold `capacity` doubles (or be null); `len_out` must be writable.
 */
enum OtaflStatus otafl_run_final_model(const struct OtaflRun *run,
                                       double *buf,
                                       size_t capacity,
                                       size_t *len_out);

/**
 * Writes records, summary, diagnostics, config and geometry into `dir`.
 *
 * # Safety
 * `run` must come from this library; `dir` must be a NUL-terminated string.
 */
enum OtaflStatus otafl_run_write_outputs(const struct OtaflRun *run, const char *dir);

/**
 * `P · d^(−ξ)`.
 *
 * # Safety
 * `out` must be writable.
 */
enum OtaflStatus otafl_path_gain(double power, double distance, double xi, double *out);

/**
 * `κ · C · |D| · f²`, joules per epoch.
 */
double otafl_computation_energy(double kappa,
                                double cycles_per_sample,
                                size_t dataset_size,
                                double freq_hz);

double otafl_dbm_to_watts(double dbm);

/**
 * Three-term convergence bound.
 *
 * # Safety
 * `out` must be writable.
 */
enum OtaflStatus otafl_convergence_bound(double delta0,
                                         double eta,
                                         size_t rounds,
                                         double tau_min,
                                         double tau_max,
                                         double smoothness,
                                         double g_sq,
                                         double zeta_sq,
                                         double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* OTAFL_H */

/* C interface to the mmwave-v2v sidelink simulator. */

#ifndef MMWAVE_V2V_H
#define MMWAVE_V2V_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum MmvStatus {
  MMV_STATUS_OK = 0,
  MMV_STATUS_NULL_POINTER = 1,
  MMV_STATUS_INVALID_UTF8 = 2,
  MMV_STATUS_CONFIG = 3,
  MMV_STATUS_SIMULATION = 4,
  MMV_STATUS_IO = 5,
  MMV_STATUS_OUT_OF_RANGE = 6,
  MMV_STATUS_PANIC = 7,
} MmvStatus;

// A single resolved run configuration.
typedef struct MmvConfig MmvConfig;

// Per-run results of a sweep, in run-id order.
typedef struct MmvResults MmvResults;

// An expanded sweep: one config per run, in run-id order.
typedef struct MmvSweep MmvSweep;

typedef struct MmvRunMetrics {
  uint64_t run_id;
  uint64_t seed;
  uint64_t sent;
  uint64_t delivered;
  double prr;
  double mean_delay_ms;
  double p95_delay_ms;
  uint64_t tx_attempts;
  uint64_t mac_drops;
  uint64_t rlc_stale_discards;
  uint64_t rlc_duplicates;
  uint64_t rlc_timer_expirations;
  double mean_buffer_wait_ms;
} MmvRunMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or NULL. Valid until the
// next library call on this thread.
const char *mmv_last_error(void);

// Library version as a static NUL-terminated string.
const char *mmv_version(void);

void mmv_string_free(char *s);

// Creates a config with default settings.
enum MmvStatus mmv_config_new(struct MmvConfig **out);

// Parses `key = value` text into a single resolved config. `seed` is the
// run seed; `run_id` is accepted.
enum MmvStatus mmv_config_from_kv(const char *text, struct MmvConfig **out);

// Sets one key. The config is left unchanged if the result is invalid.
enum MmvStatus mmv_config_set(struct MmvConfig *cfg, const char *key, const char *value);

// Serializes to `key = value` text; free with `mmv_string_free`.
enum MmvStatus mmv_config_to_kv(const struct MmvConfig *cfg, char **out);

void mmv_config_free(struct MmvConfig *cfg);

// Runs one replication.
enum MmvStatus mmv_run_replication(const struct MmvConfig *cfg, struct MmvRunMetrics *out);

// Builds a sweep from optional config-file text (may be NULL) and CLI-style
// arguments (`argv` may be NULL when `argc` is 0). Flags override file keys.
enum MmvStatus mmv_sweep_parse(const char *file_text,
                               const char *const *argv,
                               size_t argc,
                               struct MmvSweep **out);

// Number of runs in the sweep; 0 for NULL.
size_t mmv_sweep_len(const struct MmvSweep *sweep);

// Copies out the config of run `index`.
enum MmvStatus mmv_sweep_config(const struct MmvSweep *sweep, size_t index, struct MmvConfig **out);

// Runs every replication. `threads` = 0 uses all cores, 1 runs serially.
// Results do not depend on `threads`.
enum MmvStatus mmv_sweep_run(const struct MmvSweep *sweep,
                             uint32_t threads,
                             struct MmvResults **out);

void mmv_sweep_free(struct MmvSweep *sweep);

// Number of runs in the results; 0 for NULL.
size_t mmv_results_len(const struct MmvResults *results);

enum MmvStatus mmv_results_get(const struct MmvResults *results,
                               size_t index,
                               struct MmvRunMetrics *out);

// Writes the per-run CSV to `path`, overwriting it.
enum MmvStatus mmv_results_write_csv(const struct MmvResults *results, const char *path);

// Writes the per-point summary CSV to `path`, overwriting it.
enum MmvStatus mmv_results_write_summary_csv(const struct MmvResults *results, const char *path);

void mmv_results_free(struct MmvResults *results);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MMWAVE_V2V_H */

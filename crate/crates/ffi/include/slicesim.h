#ifndef SLICESIM_H
#define SLICESIM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

/*
 Result of every fallible call.
 */
typedef enum SlicesimStatus {
  SLICESIM_STATUS_OK = 0,
  SLICESIM_STATUS_NULL_POINTER = 1,
  SLICESIM_STATUS_INVALID_UTF8 = 2,
  SLICESIM_STATUS_PARSE_ERROR = 3,
  SLICESIM_STATUS_INVALID_SCENARIO = 4,
  SLICESIM_STATUS_SIMULATION_ERROR = 5,
  SLICESIM_STATUS_IO_ERROR = 6,
  SLICESIM_STATUS_NOT_FOUND = 7,
  SLICESIM_STATUS_DECODE_ERROR = 8,
  SLICESIM_STATUS_PANIC = 9,
} SlicesimStatus;

/*
 Which artifact to fetch from a finished run.
 */
typedef enum SlicesimArtifact {
  SLICESIM_ARTIFACT_METRICS = 0,
  SLICESIM_ARTIFACT_ANOMALIES = 1,
  SLICESIM_ARTIFACT_EVENTS = 2,
  SLICESIM_ARTIFACT_SUMMARY = 3,
} SlicesimArtifact;

/*
 The outputs of one completed run.
 */
typedef struct SlicesimRun SlicesimRun;

/*
 A parsed and validated scenario.
 */
typedef struct SlicesimScenario SlicesimScenario;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the last error on this thread, or null. Valid until the
 next call into the library from the same thread.
 */
const char *slicesim_last_error(void);

/*
 Library version as a static NUL-terminated string.
 */
const char *slicesim_version(void);

/*
 Parse and validate a scenario from JSON text.

 # Safety
 `json` must be a valid NUL-terminated string and `out` a valid pointer.
 */
enum SlicesimStatus slicesim_scenario_from_json(const char *json, struct SlicesimScenario **out);

/*
 Load, parse and validate a scenario file.

 # Safety
 `path` must be a valid NUL-terminated string and `out` a valid pointer.
 */
enum SlicesimStatus slicesim_scenario_load(const char *path, struct SlicesimScenario **out);

/*
 # Safety
 `sc` must come from this library and not be used afterwards. Null is a
 no-op.
 */
void slicesim_scenario_free(struct SlicesimScenario *sc);

/*
 Run a scenario to completion. When `override_seed` is true, `seed`
 replaces the scenario's seed.

 # Safety
 `sc` must be a live scenario handle and `out` a valid pointer.
 */
enum SlicesimStatus slicesim_run(const struct SlicesimScenario *sc,
                                 bool override_seed,
                                 uint64_t seed,
                                 struct SlicesimRun **out);

/*
 # Safety
 `run` must come from this library and not be used afterwards. Null is
 a no-op.
 */
void slicesim_run_free(struct SlicesimRun *run);

/*
 Write all artifacts of a run into `dir`, creating it if needed.

 # Safety
 `run` must be a live handle and `dir` a valid NUL-terminated string.
 */
enum SlicesimStatus slicesim_run_write(const struct SlicesimRun *run, const char *dir);

/*
 Copy one artifact's text into a new string owned by the caller.

 # Safety
 `run` must be a live handle and `out` a valid pointer.
 */
enum SlicesimStatus slicesim_run_artifact(const struct SlicesimRun *run,
                                          enum SlicesimArtifact which,
                                          char **out);

/*
 Mean throughput of a flow over its active metric intervals, in Mbps.

 # Safety
 `run` must be a live handle, `flow` a valid NUL-terminated string and
 `out` a valid pointer.
 */
enum SlicesimStatus slicesim_run_flow_mean_mbps(const struct SlicesimRun *run,
                                                const char *flow,
                                                double *out);

/*
 Number of anomalies the twin reported.

 # Safety
 `run` must be a live handle and `out` a valid pointer.
 */
enum SlicesimStatus slicesim_run_anomaly_count(const struct SlicesimRun *run, size_t *out);

/*
 Evaluate the scenario's criteria. `passed` and `total` receive counts;
 `report`, if not null, receives one line per criterion.

 # Safety
 `run` must be a live handle; `passed` and `total` valid pointers;
 `report` null or a valid pointer.
 */
enum SlicesimStatus slicesim_run_check(const struct SlicesimRun *run,
                                       size_t *passed,
                                       size_t *total,
                                       char **report);

/*
 Decode one E2 wire message and describe it as JSON.

 # Safety
 `bytes` must point to `len` readable bytes (or be null with `len` 0)
 and `out` must be a valid pointer.
 */
enum SlicesimStatus slicesim_e2_decode_json(const uint8_t *bytes, size_t len, char **out);

/*
 Release a string returned by this library. Null is a no-op.

 # Safety
 `s` must come from this library and not be used afterwards.
 */
void slicesim_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SLICESIM_H */

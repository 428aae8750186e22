#ifndef BLOCKPROP_H
#define BLOCKPROP_H

/* Generated by cbindgen from the blockprop-ffi crate; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible call in this ABI.
typedef enum BpStatus {
  // The call succeeded and out-parameters are valid.
  BP_STATUS_OK = 0,
  // Invalid configuration or arguments.
  BP_STATUS_CONFIG_ERROR = 2,
  // A required upstream artifact is missing.
  BP_STATUS_DEPENDENCY_ERROR = 3,
  // Input data violates a contract.
  BP_STATUS_DATA_ERROR = 4,
  // A required pointer argument was null.
  BP_STATUS_NULL_ARGUMENT = 5,
  // A string argument was not valid UTF-8.
  BP_STATUS_UTF8_ERROR = 6,
  // The library panicked; treat the handle state as poisoned.
  BP_STATUS_PANIC = 7,
} BpStatus;

// Opaque parsed event log.
typedef struct BpEventLog BpEventLog;

// Opaque trained model (classifier or regressor).
typedef struct BpModel BpModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Version of the library as a static string; do not free.
const char *bp_version(void);

// Description of the calling thread's most recent failure, or null when
// the last call succeeded. Free with [`bp_string_free`].
char *bp_last_error_message(void);

// Releases a string returned by this library. Null is a no-op.
//
// # Safety
// `ptr` must be null or a pointer returned by this library that has not
// been freed yet.
void bp_string_free(char *ptr);

// Parses a replay file into an event log handle.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must point to writable
// storage for one pointer.
enum BpStatus bp_eventlog_parse_file(const char *path, struct BpEventLog **out);

// Number of events in the log.
//
// # Safety
// `log` must be a live handle from this library; `out` must be writable.
enum BpStatus bp_eventlog_event_count(const struct BpEventLog *log, uint64_t *out);

// Activity summary of the log as a JSON document.
//
// # Safety
// `log` must be a live handle from this library; `out` must be writable.
// Free the returned string with [`bp_string_free`].
enum BpStatus bp_eventlog_summary_json(const struct BpEventLog *log, char **out);

// Releases an event log handle. Null is a no-op.
//
// # Safety
// `log` must be null or a live handle that has not been freed yet.
void bp_eventlog_free(struct BpEventLog *log);

// Runs one pipeline command with a key=value config document.
//
// `command` is one of synth, ingest, features, label, train, explain,
// ablate, regress, report, run-all. `config_text` may be empty for the
// all-defaults run.
//
// # Safety
// Both arguments must be NUL-terminated strings.
enum BpStatus bp_pipeline_run(const char *config_text, const char *command);

// ROC AUC of scores against binary labels (0 or 1).
//
// # Safety
// `labels` and `scores` must point to `len` readable elements; `out`
// must be writable.
enum BpStatus bp_roc_auc(const uint8_t *labels, const double *scores, size_t len, double *out);

// Loads a trained model saved by the pipeline.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum BpStatus bp_model_load_file(const char *path, struct BpModel **out);

// Number of features the model expects per row.
//
// # Safety
// `model` must be a live handle from this library; `out` must be writable.
enum BpStatus bp_model_num_features(const struct BpModel *model, size_t *out);

// Scores one feature row: probability for classifiers, value for
// regressors.
//
// # Safety
// `features` must point to `len` readable doubles matching
// [`bp_model_num_features`]; `out` must be writable.
enum BpStatus bp_model_predict(const struct BpModel *model,
                               const double *features,
                               size_t len,
                               double *out);

// Releases a model handle. Null is a no-op.
//
// # Safety
// `model` must be null or a live handle that has not been freed yet.
void bp_model_free(struct BpModel *model);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BLOCKPROP_H */

/* C ABI for the agentic runtime. Generated by cbindgen; do not edit. */

#ifndef AGENTIC_H
#define AGENTIC_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Status code returned by every fallible call.
typedef enum AgenticStatus {
  AGENTIC_STATUS_OK = 0,
  // A required pointer argument was null.
  AGENTIC_STATUS_NULL_ARGUMENT = 1,
  // A string argument was not valid UTF-8.
  AGENTIC_STATUS_INVALID_UTF8 = 2,
  // The document is malformed or violates the blueprint schema.
  AGENTIC_STATUS_PARSE_ERROR = 3,
  // Inputs were well-formed but failed validation.
  AGENTIC_STATUS_VALIDATION_ERROR = 4,
  // Filesystem failure.
  AGENTIC_STATUS_IO_ERROR = 5,
  // Unexpected internal failure.
  AGENTIC_STATUS_INTERNAL_ERROR = 6,
} AgenticStatus;

// A parsed blueprint. Opaque; free with [`agentic_blueprint_free`].
typedef struct AgenticBlueprint AgenticBlueprint;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message describing the most recent failure on this thread. The pointer
// stays valid until the next failing call on the same thread.
const char *agentic_last_error(void);

// Crate version as a static string; never freed.
const char *agentic_version(void);

// Free a string returned by this library. Null is accepted.
//
// # Safety
// `s` must be a pointer previously returned by an `agentic_*` function
// that documents freeing via this call, and not freed before.
void agentic_string_free(char *s);

// Parse a blueprint document (YAML or JSON). On success, `*out` owns a
// new handle; free it with [`agentic_blueprint_free`].
//
// # Safety
// `text` must point to a NUL-terminated string; `out` must be a valid
// pointer to a handle slot.
enum AgenticStatus agentic_blueprint_parse(const char *text, struct AgenticBlueprint **out);

// Free a blueprint handle. Null is accepted.
//
// # Safety
// `bp` must come from [`agentic_blueprint_parse`] and not be freed twice.
void agentic_blueprint_free(struct AgenticBlueprint *bp);

// Serialize a blueprint to its canonical YAML document. Free the output
// with [`agentic_string_free`].
//
// # Safety
// `bp` must be a live handle; `out` must be a valid pointer.
enum AgenticStatus agentic_blueprint_serialize(const struct AgenticBlueprint *bp, char **out);

// The blueprint's machine identifier. Free with [`agentic_string_free`].
//
// # Safety
// `bp` must be a live handle; `out` must be a valid pointer.
enum AgenticStatus agentic_blueprint_id(const struct AgenticBlueprint *bp, char **out);

// The blueprint's semantic version, `major.minor.patch`. Free with
// [`agentic_string_free`].
//
// # Safety
// `bp` must be a live handle; `out` must be a valid pointer.
enum AgenticStatus agentic_blueprint_version(const struct AgenticBlueprint *bp, char **out);

// Validate a blueprint file (including its local-agent tree) and return
// a one-line summary. Free the summary with [`agentic_string_free`].
//
// # Safety
// `path` must be NUL-terminated; `out_summary` must be valid.
enum AgenticStatus agentic_validate_file(const char *path, char **out_summary);

// Validate a JSON value against an inline schema (both as JSON text).
// The report lands in `out_report_json` as
// `{status, violations: [{path, expected, found}]}`; free it with
// [`agentic_string_free`]. Schema violations are reported inside the
// report, not as a status code.
//
// # Safety
// Both inputs must be NUL-terminated strings; `out_report_json` must be
// valid.
enum AgenticStatus agentic_validate_payload(const char *schema_json,
                                            const char *value_json,
                                            char **out_report_json);

// Run one seeded task from a JSON run configuration (the same shape the
// CLI's `--config` accepts). The metrics report lands in
// `out_metrics_json`; free it with [`agentic_string_free`]. Task failure
// is reported inside the metrics (`success: false`), not as a status.
//
// # Safety
// `run_config_json` must be NUL-terminated; `out_metrics_json` must be
// valid.
enum AgenticStatus agentic_run(const char *run_config_json, char **out_metrics_json);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* AGENTIC_H */

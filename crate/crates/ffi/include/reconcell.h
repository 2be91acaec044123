#ifndef RECONCELL_H
#define RECONCELL_H

/* Generated by cbindgen from crates/ffi. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RcStatus {
  RC_STATUS_OK = 0,
  RC_STATUS_NULL_ARGUMENT = 1,
  RC_STATUS_INVALID_UTF8 = 2,
  RC_STATUS_INVALID_JSON = 3,
  /**
   * Scenario failed to load or bring up.
   */
  RC_STATUS_SCENARIO = 4,
  /**
   * Unknown module, skill, sequence, run or command.
   */
  RC_STATUS_NOT_FOUND = 5,
  /**
   * Name taken, robot busy, sequence not runnable.
   */
  RC_STATUS_CONFLICT = 6,
  /**
   * Any other request the cell refused.
   */
  RC_STATUS_REJECTED = 7,
  /**
   * The command has not finished yet.
   */
  RC_STATUS_PENDING = 8,
  /**
   * A run ended somewhere other than END_SUCCESS, or timed out.
   */
  RC_STATUS_RUN_FAILED = 9,
  RC_STATUS_STORAGE = 10,
  RC_STATUS_PANIC = 99,
} RcStatus;

/**
 * Opaque cell handle.
 */
typedef struct RcCell RcCell;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version, static storage.
 */
const char *rc_version(void);

/**
 * Message for the last failed call on this thread. Valid until the next
 * failing call on the same thread.
 */
const char *rc_last_error(void);

/**
 * Builds a cell from a scenario document. With `prepare` set, the
 * scenario's teach steps are played and its run sequence compiled.
 * `scenario_json` may be null for the built-in demo.
 */
enum RcStatus rc_cell_new(const char *scenario_json, bool prepare_cell, struct RcCell **out);

/**
 * Frees a cell. Null is ignored.
 */
void rc_cell_free(struct RcCell *cell);

enum RcStatus rc_cell_step(struct RcCell *cell, uint64_t ticks);

enum RcStatus rc_cell_advance(struct RcCell *cell, double seconds);

enum RcStatus rc_cell_now(struct RcCell *cell, double *out);

/**
 * Module records as a JSON array.
 */
enum RcStatus rc_cell_snapshot(struct RcCell *cell, char **out);

/**
 * Dispatches `verb` to a module by name or id. `params_json` may be null
 * for no parameters.
 */
enum RcStatus rc_cell_command(struct RcCell *cell,
                              const char *module,
                              const char *verb,
                              const char *params_json,
                              uint64_t *cmd_out);

/**
 * Result document of a finished command; `RC_STATUS_PENDING` while it
 * runs.
 */
enum RcStatus rc_cell_command_result(struct RcCell *cell, uint64_t cmd, char **out);

/**
 * Compiles sequence source. `args_json` is an object of string values,
 * or null. Writes the sequence name.
 */
enum RcStatus rc_cell_compile(struct RcCell *cell,
                              const char *source,
                              const char *args_json,
                              char **name_out);

/**
 * Validation report of a loaded sequence as JSON.
 */
enum RcStatus rc_cell_validate(struct RcCell *cell, const char *name, char **out);

/**
 * Runs a loaded sequence to its end, stepping the clock for at most
 * `max_seconds`. The report is written whenever the run reaches an end,
 * including END_FAILURE.
 */
enum RcStatus rc_cell_run(struct RcCell *cell,
                          const char *name,
                          double max_seconds,
                          char **report_out);

/**
 * Events with `seq >= from_seq` as a JSON array.
 */
enum RcStatus rc_cell_events(struct RcCell *cell, uint64_t from_seq, char **out);

/**
 * Frees a string returned by this library. Null is ignored.
 */
void rc_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RECONCELL_H */

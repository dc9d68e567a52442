#ifndef PROMPTOPT_H
#define PROMPTOPT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes.
 */
typedef enum {
  PD_STATUS_OK = 0,
  PD_STATUS_NULL_ARGUMENT = 1,
  PD_STATUS_INVALID_UTF8 = 2,
  PD_STATUS_INVALID_ARGUMENT = 3,
  PD_STATUS_CONFIG = 4,
  PD_STATUS_BACKEND = 5,
  PD_STATUS_BUDGET = 6,
  PD_STATUS_CORRUPT_STATE = 7,
  PD_STATUS_MISSING_RUN = 8,
  PD_STATUS_MARKER_NOT_FOUND = 9,
  PD_STATUS_IO = 10,
  PD_STATUS_PANIC = 11,
  PD_STATUS_INTERNAL = 12,
} PdStatus;

typedef enum {
  PD_SCHEDULE_KIND_NONE = 0,
  PD_SCHEDULE_KIND_FIXED = 1,
  PD_SCHEDULE_KIND_LINEAR_DECAY = 2,
  PD_SCHEDULE_KIND_COSINE_DECAY = 3,
} PdScheduleKind;

/**
 * Opaque edit-budget schedule.
 */
typedef struct PdSchedule PdSchedule;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or an empty string. The
 * pointer stays valid until the next call into this library on the same
 * thread.
 */
const char *pd_last_error_message(void);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void pd_string_free(char *s);

/**
 * Creates a schedule over `horizon` steps.
 *
 * # Safety
 * `out` must be valid for writes.
 */
PdStatus pd_schedule_new(PdScheduleKind kind,
                         uint32_t c_max,
                         uint32_t horizon,
                         bool warmup,
                         double floor_fraction,
                         PdSchedule **out);

/**
 * Word budget at step `t`. `out_constrained` is false (and `out_budget`
 * 0) for the unconstrained kind.
 *
 * # Safety
 * `schedule` must come from [`pd_schedule_new`]; outputs must be valid
 * for writes.
 */
PdStatus pd_schedule_constraint_at(const PdSchedule *schedule,
                                   uint32_t t,
                                   uint32_t *out_budget,
                                   bool *out_constrained);

/**
 * Releases a schedule. Null is ignored.
 *
 * # Safety
 * `schedule` must come from [`pd_schedule_new`] and not have been freed.
 */
void pd_schedule_free(PdSchedule *schedule);

/**
 * Word-level Levenshtein distance.
 *
 * # Safety
 * `a` and `b` must be NUL-terminated; `out` valid for writes.
 */
PdStatus pd_word_edit_distance(const char *a, const char *b, size_t *out);

/**
 * ROUGE-L F-measure in `[0, 1]`.
 *
 * # Safety
 * `prediction` and `gold` must be NUL-terminated; `out` valid for writes.
 */
PdStatus pd_rouge_l(const char *prediction, const char *gold, double *out);

/**
 * 1.0 if the answers match after default normalization, else 0.0.
 *
 * # Safety
 * `prediction` and `gold` must be NUL-terminated; `out` valid for writes.
 */
PdStatus pd_exact_match(const char *prediction, const char *gold, double *out);

/**
 * The trimmed text between the first START and the following END.
 *
 * # Safety
 * `text` must be NUL-terminated; `out` valid for writes.
 */
PdStatus pd_extract_marked(const char *text, char **out);

/**
 * Renders a built-in template. `bindings_json` is a JSON object mapping
 * placeholder names to strings.
 *
 * # Safety
 * Inputs must be NUL-terminated; `out` valid for writes.
 */
PdStatus pd_template_render(const char *template_id, const char *bindings_json, char **out);

/**
 * Runs the config at `config_path`. A negative `max_steps` means no
 * limit. On success `out_json` receives `{"outcome", "summary"}`.
 *
 * # Safety
 * `config_path` must be NUL-terminated; `out_json` valid for writes.
 */
PdStatus pd_run_config(const char *config_path, bool fresh, int64_t max_steps, char **out_json);

/**
 * Continues the run in `run_dir`. Arguments as for [`pd_run_config`].
 *
 * # Safety
 * `run_dir` must be NUL-terminated; `out_json` valid for writes.
 */
PdStatus pd_resume(const char *run_dir, int64_t max_steps, char **out_json);

/**
 * Library version, statically allocated.
 */
const char *pd_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PROMPTOPT_H */

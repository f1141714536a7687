#ifndef SOCRATIC_H
#define SOCRATIC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stddef.h>
#include <stdint.h>

// Result code of every fallible call.
typedef enum SocStatus {
  SOC_STATUS_OK = 0,
  SOC_STATUS_NULL_POINTER = 1,
  SOC_STATUS_INVALID_UTF8 = 2,
  SOC_STATUS_INVALID_ARGUMENT = 3,
  SOC_STATUS_PARSE_ERROR = 4,
  SOC_STATUS_BACKEND_ERROR = 5,
  SOC_STATUS_PANIC = 6,
} SocStatus;

// Rule-based strategy and method planner.
typedef struct SocPlanner SocPlanner;

// Seven-dimension scoring rubric.
typedef struct SocRubric SocRubric;

// Message for the last failed call on this thread, or NULL. Valid until the
// next failing call on the same thread.
const char *soc_last_error(void);

// Releases a string returned by this library. NULL is ignored.
//
// # Safety
// `s` must come from this library and not have been freed.
void soc_string_free(char *s);

// Canonical strategy label for `index`, or NULL when out of range. The
// string is static.
const char *soc_strategy_label(uint32_t index);

// Canonical Socratic method label for `index`, or NULL when out of range.
const char *soc_method_label(uint32_t index);

// Writes the softmax of `len` logits to `out`.
//
// # Safety
// `logits` and `out` must each point to `len` doubles.
enum SocStatus soc_softmax(const double *logits, size_t len, double *out);

// Distinct-n over `count` texts.
//
// # Safety
// `texts` must point to `count` NUL-terminated strings; `out` to a double.
enum SocStatus soc_distinct_n(const char *const *texts, size_t count, size_t n, double *out);

// Rule-mode proactive questioning score over `count` responses.
//
// # Safety
// `responses` must point to `count` NUL-terminated strings; `out` to a double.
enum SocStatus soc_pqa(const char *const *responses, size_t count, double *out);

// A planner using the built-in rule tables.
struct SocPlanner *soc_planner_new_rule(void);

// # Safety
// `planner` must come from [`soc_planner_new_rule`] and not be used after.
void soc_planner_free(struct SocPlanner *planner);

// Plans the next turn for `utterance`. `history_json` is NULL or a JSON array
// of `{"seeker": str, "supporter": str|null}`. Writes the strategy and method
// indices and, when `out_json` is non-NULL, the full planning signal as JSON.
//
// # Safety
// Pointers must be valid; `out_json` receives a string to release with
// [`soc_string_free`].
enum SocStatus soc_planner_plan(const struct SocPlanner *planner,
                                const char *history_json,
                                const char *utterance,
                                uint32_t *out_strategy,
                                uint32_t *out_method,
                                char **out_json);

// The default rubric.
struct SocRubric *soc_rubric_new_default(void);

// Parses and validates a rubric from JSON.
//
// # Safety
// `json` must be a NUL-terminated string; `out` a valid pointer.
enum SocStatus soc_rubric_from_json(const char *json, struct SocRubric **out);

// # Safety
// `rubric` must come from this library and not be used after.
void soc_rubric_free(struct SocRubric *rubric);

// Copies the seven weights, in rubric order, to `out`.
//
// # Safety
// `out` must point to 7 doubles.
enum SocStatus soc_rubric_weights(const struct SocRubric *rubric, double *out);

// Scores `candidate` as the reply to the last seeker turn of
// `conversation_json` (one corpus line). With `adjust_for_anxiety` non-zero,
// anxiety-related dialogues are scored with the shifted weights. Writes the
// total and, when `out_dims` is non-NULL, the seven dimension scores.
//
// # Safety
// Pointers must be valid; `out_dims` must be NULL or point to 7 doubles.
enum SocStatus soc_rubric_score(const struct SocRubric *rubric,
                                const char *conversation_json,
                                const char *candidate,
                                int adjust_for_anxiety,
                                double *out_total,
                                double *out_dims);

#endif /* SOCRATIC_H */

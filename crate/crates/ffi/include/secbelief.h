/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#ifndef SECBELIEF_H
#define SECBELIEF_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every `sb_*` call.
typedef enum SbStatus {
  SB_STATUS_OK = 0,
  SB_STATUS_NULL_ARGUMENT = 1,
  SB_STATUS_INVALID_UTF8 = 2,
  SB_STATUS_INVALID_ARGUMENT = 3,
  SB_STATUS_UNKNOWN_FORMAT = 4,
  SB_STATUS_MALFORMED_REPORT = 5,
  SB_STATUS_UNKNOWN_SUBJECT = 6,
  SB_STATUS_UNKNOWN_BELIEF = 7,
  SB_STATUS_INVALID_ASSESSMENT = 8,
  SB_STATUS_STORAGE = 9,
  SB_STATUS_INTERNAL = 10,
  SB_STATUS_PANIC = 11,
} SbStatus;

// Opaque knowledge base handle.
typedef struct SbKnowledgeBase SbKnowledgeBase;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Creates an in-memory knowledge base. `rules_json` may be null for defaults.
//
// # Safety
// `rules_json` must be null or a NUL-terminated string; `out` must be valid for writes.
enum SbStatus sb_kb_open_memory(const char *rules_json, struct SbKnowledgeBase **out);

// Opens or creates a persistent knowledge base in `data_dir`, replaying its
// event log. The directory stays locked until the handle is freed.
//
// # Safety
// String arguments must be null or NUL-terminated; `out` must be valid for writes.
enum SbStatus sb_kb_open(const char *data_dir,
                         const char *rules_json,
                         int64_t at,
                         struct SbKnowledgeBase **out);

// Releases a handle. Null is ignored.
//
// # Safety
// `kb` must be null or a handle from `sb_kb_open*` that has not been freed.
void sb_kb_free(struct SbKnowledgeBase *kb);

// Ingests one raw report. `format` (sarif, generic, dependency) and `run_id`
// may be null. Writes the ingestion result as JSON.
//
// # Safety
// `bytes` must point to `len` readable bytes; other pointers as documented above.
enum SbStatus sb_kb_ingest(struct SbKnowledgeBase *kb,
                           const uint8_t *bytes,
                           size_t len,
                           const char *format,
                           const char *run_id,
                           int64_t received_at,
                           char **out_json);

// Writes the issue list as JSON, filtered by `status` and `min_severity`
// (either may be null).
//
// # Safety
// `kb` must be a live handle, strings null or NUL-terminated, out pointers valid for writes.
enum SbStatus sb_kb_issues(const struct SbKnowledgeBase *kb,
                           const char *status,
                           const char *min_severity,
                           char **out_json);

// Submits an assessment given as JSON (`subject`, `verdict`, `rationale`,
// `author`). Writes the outcome, including the revision report.
//
// # Safety
// `kb` must be a live handle, strings null or NUL-terminated, out pointers valid for writes.
enum SbStatus sb_kb_assess(struct SbKnowledgeBase *kb,
                           const char *request_json,
                           int64_t at,
                           char **out_json);

// Retracts a belief and everything resting on it. Writes the revision report.
//
// # Safety
// `kb` must be a live handle, strings null or NUL-terminated, out pointers valid for writes.
enum SbStatus sb_kb_retract(struct SbKnowledgeBase *kb,
                            const char *belief_id,
                            const char *reason,
                            int64_t at,
                            char **out_json);

// Writes the justification tree of a belief as JSON.
//
// # Safety
// `kb` must be a live handle, strings null or NUL-terminated, out pointers valid for writes.
enum SbStatus sb_kb_explain(const struct SbKnowledgeBase *kb,
                            const char *belief_id,
                            char **out_json);

// Counts Active derived beliefs that have lost all support. Zero means healthy.
//
// # Safety
// `kb` must be a live handle, strings null or NUL-terminated, out pointers valid for writes.
enum SbStatus sb_kb_audit(const struct SbKnowledgeBase *kb, size_t *out_unsupported);

// Sequence number of the newest event.
//
// # Safety
// `kb` must be a live handle, strings null or NUL-terminated, out pointers valid for writes.
enum SbStatus sb_kb_seq(const struct SbKnowledgeBase *kb, uint64_t *out_seq);

// Message of the last failed call on this thread, or null. Valid until the
// next `sb_*` call on the same thread; do not free.
const char *sb_last_error(void);

// Frees a string returned by this library. Null is ignored.
//
// # Safety
// `s` must be null or a string from an `out_json` parameter, freed once.
void sb_string_free(char *s);

// Library version as a static NUL-terminated string.
const char *sb_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SECBELIEF_H */

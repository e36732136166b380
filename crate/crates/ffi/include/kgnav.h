#ifndef KGNAV_H
#define KGNAV_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes shared by every fallible function.
 */
typedef enum {
  KGNAV_STATUS_OK = 0,
  KGNAV_STATUS_NULL_ARGUMENT = 1,
  KGNAV_STATUS_INVALID_UTF8 = 2,
  KGNAV_STATUS_USAGE = 3,
  KGNAV_STATUS_VALIDATION = 4,
  KGNAV_STATUS_IO = 5,
  KGNAV_STATUS_RUNTIME = 6,
  KGNAV_STATUS_PANIC = 7,
} KgnavStatus;

/**
 * Opaque engine handle: mention graph, vector index and embedder.
 */
typedef struct KgnavEngine KgnavEngine;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the most recent failure on this thread, or null. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *kgnav_last_error(void);

/**
 * Library version as a static string.
 */
const char *kgnav_version(void);

/**
 * Build an engine from a corpus JSONL file with default chunking, the
 * builtin extractor and the reference embedder. `annotations_path` may be null.
 *
 * # Safety
 * String arguments must be null or valid NUL-terminated strings; `out` must
 * point to writable storage for one pointer.
 */
KgnavStatus kgnav_engine_build(const char *corpus_path,
                               const char *annotations_path,
                               KgnavEngine **out);

/**
 * Load an engine from a snapshot written by `kgnav build` or [`kgnav_engine_save`].
 *
 * # Safety
 * As for [`kgnav_engine_build`].
 */
KgnavStatus kgnav_engine_open(const char *snapshot_path, KgnavEngine **out);

/**
 * # Safety
 * `engine` must be a live handle; `path` a valid NUL-terminated string.
 */
KgnavStatus kgnav_engine_save(const KgnavEngine *engine, const char *path);

/**
 * Release an engine. Null is ignored.
 *
 * # Safety
 * `engine` must be null or a handle not yet freed.
 */
void kgnav_engine_free(KgnavEngine *engine);

/**
 * Run one controller and return `{"evidence": ..., "trace": "<jsonl>"}`.
 *
 * `controller` is `vector`, `graphrag-local`, `heuristic` or `llm`.
 * `config_json` may be null or a JSON object overriding controller settings.
 * `script_path` may be null; the `llm` controller requires it. With
 * `frozen_clock` set, timings are recorded as zero.
 *
 * # Safety
 * `engine` must be a live handle; strings null or NUL-terminated; `out_json`
 * writable.
 */
KgnavStatus kgnav_ask(const KgnavEngine *engine,
                      const char *question,
                      const char *controller,
                      const char *config_json,
                      const char *script_path,
                      bool frozen_clock,
                      char **out_json);

/**
 * Seed entities for a question as a JSON array of
 * `{entity_uri, label, chunk_count}`.
 *
 * # Safety
 * As for [`kgnav_ask`].
 */
KgnavStatus kgnav_entity_search(const KgnavEngine *engine,
                                const char *question,
                                size_t n_seed,
                                char **out_json);

/**
 * Write the graph as line-oriented triples.
 *
 * # Safety
 * `engine` must be a live handle; `path` a valid NUL-terminated string.
 */
KgnavStatus kgnav_export_triples(const KgnavEngine *engine, const char *path);

/**
 * Windowed Levenshtein partial score in `[0, 100]`, or -1 on a null or
 * non-UTF-8 argument.
 *
 * # Safety
 * Arguments must be null or valid NUL-terminated strings.
 */
int32_t kgnav_partial_fuzzy_score(const char *a, const char *b);

/**
 * Release a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must be null or a pointer obtained from this library, not yet freed.
 */
void kgnav_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* KGNAV_H */

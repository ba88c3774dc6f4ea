/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#ifndef COVCLOSE_H
#define COVCLOSE_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

/**
 * Result codes.
 */
typedef enum CovcloseStatus {
  COVCLOSE_STATUS_OK = 0,
  COVCLOSE_STATUS_NULL_ARGUMENT = 1,
  COVCLOSE_STATUS_INVALID_UTF8 = 2,
  COVCLOSE_STATUS_PARSE_ERROR = 3,
  COVCLOSE_STATUS_DOMAIN_ERROR = 4,
  COVCLOSE_STATUS_IO_ERROR = 5,
  COVCLOSE_STATUS_COVERAGE_ERROR = 6,
  COVCLOSE_STATUS_RUN_ERROR = 7,
  COVCLOSE_STATUS_PANIC = 8,
} CovcloseStatus;

typedef enum CovcloseDifficulty {
  COVCLOSE_DIFFICULTY_EASY = 0,
  COVCLOSE_DIFFICULTY_MEDIUM = 1,
  COVCLOSE_DIFFICULTY_HARD = 2,
} CovcloseDifficulty;

/**
 * Line-coverage map.
 */
typedef struct CovcloseCoverage CovcloseCoverage;

/**
 * Parsed design sources.
 */
typedef struct CovcloseDesign CovcloseDesign;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread; empty when none. Valid until
 * the next failing call on the same thread.
 */
const char *covclose_last_error(void);

/**
 * Library version, static storage.
 */
const char *covclose_version(void);

/**
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void covclose_string_free(char *s);

/**
 * Parses `count` source files. `top` may be null to infer the top module.
 *
 * # Safety
 * `paths` must point to `count` valid C strings; `out` must be writable.
 */
enum CovcloseStatus covclose_design_parse(const char *const *paths,
                                          size_t count,
                                          const char *top,
                                          struct CovcloseDesign **out);

/**
 * # Safety
 * `design` must come from [`covclose_design_parse`] and not have been freed.
 */
void covclose_design_free(struct CovcloseDesign *design);

/**
 * Top module name, caller-owned.
 *
 * # Safety
 * `design` must be a live handle; `out` must be writable.
 */
enum CovcloseStatus covclose_design_top(const struct CovcloseDesign *design, char **out);

/**
 * # Safety
 * `design` must be a live handle; the out pointers must be writable.
 */
enum CovcloseStatus covclose_design_metrics(const struct CovcloseDesign *design,
                                            size_t *total_lines,
                                            size_t *hierarchy_depth,
                                            enum CovcloseDifficulty *difficulty);

/**
 * Top-module ports as a JSON array, caller-owned.
 *
 * # Safety
 * `design` must be a live handle; `out` must be writable.
 */
enum CovcloseStatus covclose_design_ports_json(const struct CovcloseDesign *design, char **out);

enum CovcloseDifficulty covclose_classify_difficulty(size_t total_lines, size_t hierarchy_depth);

/**
 * Probability that one of `k` of `n` candidates, `c` of them good, is good.
 *
 * # Safety
 * `out` must be writable.
 */
enum CovcloseStatus covclose_pass_at_k(uint64_t n, uint64_t c, uint64_t k, double *out);

/**
 * Geometric mean of `len` percentages; zeros are skipped.
 *
 * # Safety
 * `values` must point to `len` doubles; `out` must be writable.
 */
enum CovcloseStatus covclose_geometric_mean(const double *values, size_t len, double *out);

/**
 * Reads a coverage XML report.
 *
 * # Safety
 * `xml` must be a valid C string; `out` must be writable.
 */
enum CovcloseStatus covclose_coverage_import_xml(const char *xml, struct CovcloseCoverage **out);

/**
 * Reads a simulator coverage artifact and maps it onto `design`.
 *
 * # Safety
 * `path` must be a valid C string, `design` a live handle, `out` writable.
 */
enum CovcloseStatus covclose_coverage_parse_artifact(const char *path,
                                                     const struct CovcloseDesign *design,
                                                     struct CovcloseCoverage **out);

/**
 * Sums the hits of two maps with the same instrumented lines into a new map.
 *
 * # Safety
 * `a` and `b` must be live handles; `out` must be writable.
 */
enum CovcloseStatus covclose_coverage_merge(const struct CovcloseCoverage *a,
                                            const struct CovcloseCoverage *b,
                                            struct CovcloseCoverage **out);

/**
 * Covered and instrumented line counts, and the percentage rounded to 2 decimals.
 *
 * # Safety
 * `map` must be a live handle; the out pointers must be writable.
 */
enum CovcloseStatus covclose_coverage_score(const struct CovcloseCoverage *map,
                                            size_t *covered,
                                            size_t *total,
                                            double *percent);

/**
 * The map as a coverage XML report, caller-owned.
 *
 * # Safety
 * `map` must be a live handle; `out` must be writable.
 */
enum CovcloseStatus covclose_coverage_export_xml(const struct CovcloseCoverage *map, char **out);

/**
 * # Safety
 * `map` must come from this library and not have been freed.
 */
void covclose_coverage_free(struct CovcloseCoverage *map);

/**
 * Runs a manifest file to completion and returns report.json, caller-owned.
 * Conversations that stopped on an error are reported inside the JSON;
 * `fatal_conversations` receives their count and may be null.
 *
 * # Safety
 * `manifest_path` must be a valid C string; `report_json` must be writable.
 */
enum CovcloseStatus covclose_run_manifest(const char *manifest_path,
                                          bool overwrite,
                                          char **report_json,
                                          size_t *fatal_conversations);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* COVCLOSE_H */

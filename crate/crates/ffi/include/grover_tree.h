#ifndef GROVER_TREE_H
#define GROVER_TREE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum GtStatus {
  GT_STATUS_OK = 0,
  GT_STATUS_NULL_POINTER = 1,
  GT_STATUS_INVALID_UTF8 = 2,
  GT_STATUS_INVALID_SPEC = 3,
  GT_STATUS_SIZE_CAP = 4,
  GT_STATUS_UNKNOWN_VERTEX = 5,
  GT_STATUS_OUT_OF_RANGE = 6,
  GT_STATUS_DIMENSION_MISMATCH = 7,
  GT_STATUS_PRECONDITION = 8,
  GT_STATUS_NUMERICAL = 9,
  GT_STATUS_CONSISTENCY = 10,
  GT_STATUS_IO = 11,
  GT_STATUS_PANIC = 12,
} GtStatus;

typedef enum GtInitial {
  // Amplitude 1 on every arc out of the root.
  GT_INITIAL_A = 0,
  // Amplitude `e^{2πik/deg}` on the `k`-th arc out of the root.
  GT_INITIAL_B = 1,
} GtInitial;

// Opaque truncated tree.
typedef struct GtTree GtTree;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static string; do not free.
const char *gt_version(void);

// Message for the last failed call on this thread, or NULL. Free with
// `gt_string_free`.
char *gt_last_error_message(void);

// # Safety
// `s` must come from this library and not have been freed.
void gt_string_free(char *s);

// Build a truncation of depth `depth` from a JSON tree spec.
//
// # Safety
// `spec_json` must be a NUL-terminated string and `out` writable.
enum GtStatus gt_tree_new(const char *spec_json, size_t depth, struct GtTree **out);

// # Safety
// `tree` must come from `gt_tree_new` and not have been freed.
void gt_tree_free(struct GtTree *tree);

// # Safety
// `tree` must be a live handle or NULL.
size_t gt_tree_num_vertices(const struct GtTree *tree);

// # Safety
// `tree` must be a live handle or NULL.
size_t gt_tree_num_arcs(const struct GtTree *tree);

// One step of the cut-off walk. `input` and `output` hold `2 * len`
// doubles; `len` must equal the number of arcs. A negative `cutoff` uses
// the truncation depth.
//
// # Safety
// `input` and `output` must point to `2 * len` doubles and not overlap.
enum GtStatus gt_walk_apply(const struct GtTree *tree,
                            int64_t cutoff,
                            const double *input,
                            double *output,
                            size_t len);

// Finding probabilities per vertex after `steps` exact steps from a
// standard initial state. `values` holds `len` doubles, `len` equal to
// the number of vertices.
//
// # Safety
// `values` must point to `len` writable doubles.
enum GtStatus gt_evolve_distribution(const struct GtTree *tree,
                                     enum GtInitial kind,
                                     size_t steps,
                                     double *values,
                                     size_t len);

// Per-vertex limit distribution and its total mass for a standard state.
// `values` may be NULL when only the mass is wanted.
//
// # Safety
// `values`, if non-NULL, must point to `len` writable doubles; `mass` must
// be writable.
enum GtStatus gt_limit_distribution(const struct GtTree *tree,
                                    enum GtInitial kind,
                                    double *values,
                                    size_t len,
                                    double *mass);

// Classified spectrum of the cut-off walk at depth `n` as JSON.
//
// # Safety
// `spec_json` must be NUL-terminated and `out` writable.
enum GtStatus gt_spectrum_json(const char *spec_json, size_t n, char **out);

// Birth-density series for depths `0..=max_depth` as CSV.
//
// # Safety
// `spec_json` must be NUL-terminated and `out` writable.
enum GtStatus gt_density_csv(const char *spec_json, size_t max_depth, char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GROVER_TREE_H */

#ifndef FORCEMATCH_H
#define FORCEMATCH_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes of every fallible call.
typedef enum FmStatus {
  FM_STATUS_OK = 0,
  FM_STATUS_NULL_POINTER = 1,
  FM_STATUS_INVALID_ARGUMENT = 2,
  FM_STATUS_IO = 3,
  FM_STATUS_PARSE = 4,
  FM_STATUS_INVALID_MESH = 5,
  FM_STATUS_CONFIG = 6,
  FM_STATUS_NUMERICAL = 7,
  FM_STATUS_NOT_CONVERGED = 8,
  FM_STATUS_ABORTED = 9,
  FM_STATUS_BUFFER_TOO_SMALL = 10,
  FM_STATUS_PANIC = 11,
} FmStatus;

// How a match terminated.
typedef enum FmTermination {
  FM_TERMINATION_CONVERGED = 0,
  FM_TERMINATION_STAGNATED = 1,
  FM_TERMINATION_ITERATION_CAP = 2,
} FmTermination;

// Opaque matcher configuration.
typedef struct FmConfig FmConfig;

// Opaque match result.
typedef struct FmResult FmResult;

// Opaque triangle surface.
typedef struct FmSurface FmSurface;

// Opaque tetrahedral mesh.
typedef struct FmTetMesh FmTetMesh;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. The pointer
// stays valid until the next failing call on the same thread.
const char *fm_last_error(void);

// Library version as a static NUL-terminated string.
const char *fm_version(void);

// Loads an OFF, OBJ or PLY surface.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum FmStatus fm_surface_load(const char *path, struct FmSurface **out);

// Builds a surface from `num_vertices` positions and `num_triangles`
// index triples.
//
// # Safety
// `vertices` must hold `3 * num_vertices` doubles and `triangles`
// `3 * num_triangles` indices; `out` must be writable.
enum FmStatus fm_surface_new(const double *vertices,
                             size_t num_vertices,
                             const uint32_t *triangles,
                             size_t num_triangles,
                             struct FmSurface **out);

// # Safety
// `surface` must be null or a handle from this library, not yet freed.
void fm_surface_free(struct FmSurface *surface);

// Number of vertices, or 0 for a null handle.
//
// # Safety
// `surface` must be null or a live handle.
size_t fm_surface_num_vertices(const struct FmSurface *surface);

// Loads a `.node`/`.ele` pair.
//
// # Safety
// Both paths must be NUL-terminated strings; `out` must be writable.
enum FmStatus fm_tetmesh_load(const char *node_path, const char *ele_path, struct FmTetMesh **out);

// Builds a tet mesh from `num_nodes` positions and `num_tets` index
// quadruples.
//
// # Safety
// `nodes` must hold `3 * num_nodes` doubles and `tets` `4 * num_tets`
// indices; `out` must be writable.
enum FmStatus fm_tetmesh_new(const double *nodes,
                             size_t num_nodes,
                             const uint32_t *tets,
                             size_t num_tets,
                             struct FmTetMesh **out);

// # Safety
// `mesh` must be null or a handle from this library, not yet freed.
void fm_tetmesh_free(struct FmTetMesh *mesh);

// Number of boundary nodes, or 0 for a null handle.
//
// # Safety
// `mesh` must be null or a live handle.
size_t fm_tetmesh_num_boundary_nodes(const struct FmTetMesh *mesh);

// Default configuration.
//
// # Safety
// `out` must be writable.
enum FmStatus fm_config_new(struct FmConfig **out);

// Reads a `key = value` configuration file or run manifest on top of the
// defaults.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum FmStatus fm_config_load(const char *path, struct FmConfig **out);

// Sets one configuration key from its text value.
//
// # Safety
// `config` must be a live handle; `key` and `value` NUL-terminated.
enum FmStatus fm_config_set(struct FmConfig *config, const char *key, const char *value);

// # Safety
// `config` must be null or a handle from this library, not yet freed.
void fm_config_free(struct FmConfig *config);

// Matches `source` (embedded in `coarse`) to `target`.
//
// # Safety
// All handles must be live; `out` must be writable.
enum FmStatus fm_match(const struct FmConfig *config,
                       const struct FmSurface *source,
                       const struct FmSurface *target,
                       const struct FmTetMesh *coarse,
                       struct FmResult **out);

// # Safety
// `result` must be null or a handle from this library, not yet freed.
void fm_result_free(struct FmResult *result);

// # Safety
// `result` must be a live handle; `out` must be writable.
enum FmStatus fm_result_termination(const struct FmResult *result, enum FmTermination *out);

// Number of outer iterations performed, or 0 for a null handle.
//
// # Safety
// `result` must be null or a live handle.
size_t fm_result_num_iterations(const struct FmResult *result);

// Number of coarse boundary nodes, the row count of the force arrays.
//
// # Safety
// `result` must be null or a live handle.
size_t fm_result_num_boundary_nodes(const struct FmResult *result);

// Deformed fine surface positions, `3 × vertices` doubles.
//
// # Safety
// `result` must be a live handle; `out` null or holding `cap` doubles;
// `len` null or writable.
enum FmStatus fm_result_fine_vertices(const struct FmResult *result,
                                      double *out,
                                      size_t cap,
                                      size_t *len);

// Deformed coarse node positions, `3 × nodes` doubles.
//
// # Safety
// As for [`fm_result_fine_vertices`].
enum FmStatus fm_result_coarse_nodes(const struct FmResult *result,
                                     double *out,
                                     size_t cap,
                                     size_t *len);

// Boundary forces, `3 × boundary nodes` doubles in boundary order.
//
// # Safety
// As for [`fm_result_fine_vertices`].
enum FmStatus fm_result_forces(const struct FmResult *result, double *out, size_t cap, size_t *len);

// Forces pulled back to the reference configuration, same layout as
// [`fm_result_forces`].
//
// # Safety
// As for [`fm_result_fine_vertices`].
enum FmStatus fm_result_pulled_back_forces(const struct FmResult *result,
                                           double *out,
                                           size_t cap,
                                           size_t *len);

// Mesh node index of each boundary node, in boundary order.
//
// # Safety
// `result` must be a live handle; `out` null or holding `cap` values;
// `len` null or writable.
enum FmStatus fm_result_boundary_nodes(const struct FmResult *result,
                                       size_t *out,
                                       size_t cap,
                                       size_t *len);

// Per-iteration force L1 norms from the log.
//
// # Safety
// As for [`fm_result_fine_vertices`].
enum FmStatus fm_result_force_history(const struct FmResult *result,
                                      double *out,
                                      size_t cap,
                                      size_t *len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FORCEMATCH_H */

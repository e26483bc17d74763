#ifndef CORRBENCH_H
#define CORRBENCH_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result code of every fallible call.
 */
typedef enum CbStatus {
  CB_STATUS_OK = 0,
  CB_STATUS_NULL_ARGUMENT = 1,
  CB_STATUS_INVALID_ARGUMENT = 2,
  CB_STATUS_IO = 3,
  CB_STATUS_FORMAT = 4,
  CB_STATUS_INVALID_MESH = 5,
  CB_STATUS_DEGENERATE = 6,
  CB_STATUS_CORRESPONDENCE = 7,
  CB_STATUS_NETWORK = 8,
  CB_STATUS_CONFIG = 9,
  CB_STATUS_PANIC = 10,
  CB_STATUS_OTHER = 11,
} CbStatus;

/*
 Dense correspondence handle.
 */
typedef struct CbCorrespondence CbCorrespondence;

/*
 Generated matching instance handle.
 */
typedef struct CbInstance CbInstance;

/*
 Triangle mesh handle.
 */
typedef struct CbMesh CbMesh;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Copies the calling thread's last error message into `buf` (NUL
 terminated, truncated to `cap`) and returns its full length in bytes.

 # Safety
 `buf` must point to `cap` writable bytes or be null with `cap == 0`.
 */
size_t cb_last_error(char *buf, size_t cap);

/*
 Releases a string returned by this library.

 # Safety
 `s` must come from this library and not be freed twice.
 */
void cb_string_free(char *s);

/*
 Loads an OFF, PLY or OBJ mesh.

 # Safety
 `path` must be a NUL-terminated string; `out` must be writable.
 */
enum CbStatus cb_mesh_load(const char *path, struct CbMesh **out);

/*
 Builds a mesh from `3 * vertex_count` coordinates and `3 * face_count`
 vertex indices.

 # Safety
 The arrays must hold the stated number of elements; `out` must be writable.
 */
enum CbStatus cb_mesh_new(const double *coords,
                          size_t vertex_count,
                          const uint32_t *indices,
                          size_t face_count,
                          struct CbMesh **out);

/*
 # Safety
 `mesh` must come from this library and not be freed twice.
 */
void cb_mesh_free(struct CbMesh *mesh);

/*
 Vertex count, 0 for a null handle.

 # Safety
 `mesh` must be a live handle or null.
 */
size_t cb_mesh_vertex_count(const struct CbMesh *mesh);

/*
 Face count, 0 for a null handle.

 # Safety
 `mesh` must be a live handle or null.
 */
size_t cb_mesh_face_count(const struct CbMesh *mesh);

/*
 # Safety
 `mesh` must be a live handle; `out` must be writable.
 */
enum CbStatus cb_mesh_surface_area(const struct CbMesh *mesh, double *out);

/*
 Copies the `3 * vertex_count` coordinates into `out`.

 # Safety
 `out` must hold `len` doubles.
 */
enum CbStatus cb_mesh_vertices(const struct CbMesh *mesh, double *out, size_t len);

/*
 Edge-graph geodesic distances from `source` to every vertex.

 # Safety
 `out` must hold `len == vertex_count` doubles.
 */
enum CbStatus cb_geodesic_distances(const struct CbMesh *mesh,
                                    size_t source,
                                    double *out,
                                    size_t len);

/*
 Loads a correspondence file (text or binary).

 # Safety
 `path` must be a NUL-terminated string; `out` must be writable.
 */
enum CbStatus cb_correspondence_load(const char *path, struct CbCorrespondence **out);

/*
 # Safety
 `corr` must come from this library and not be freed twice.
 */
void cb_correspondence_free(struct CbCorrespondence *corr);

/*
 Number of source vertices, 0 for a null handle.

 # Safety
 `corr` must be a live handle or null.
 */
size_t cb_correspondence_len(const struct CbCorrespondence *corr);

/*
 Dominant-vertex snap onto `target`; `-1` marks unmatched vertices.

 # Safety
 `out` must hold `len == cb_correspondence_len(corr)` values.
 */
enum CbStatus cb_correspondence_vertex_map(const struct CbCorrespondence *corr,
                                           const struct CbMesh *target,
                                           int64_t *out,
                                           size_t len);

/*
 Intersection over union of two byte masks (nonzero = set).

 # Safety
 Both masks must hold `len` bytes; `out` must be writable.
 */
enum CbStatus cb_iou(const uint8_t *pred, const uint8_t *gt, size_t len, double *out);

/*
 F1 score of two byte masks (nonzero = set).

 # Safety
 Both masks must hold `len` bytes; `out` must be writable.
 */
enum CbStatus cb_f1(const uint8_t *pred, const uint8_t *gt, size_t len, double *out);

/*
 Loads an instance directory written by the generator.

 # Safety
 `dir` must be a NUL-terminated string; `out` must be writable.
 */
enum CbStatus cb_instance_load(const char *dir, struct CbInstance **out);

/*
 # Safety
 `inst` must come from this library and not be freed twice.
 */
void cb_instance_free(struct CbInstance *inst);

/*
 Source (x) vertex count, 0 for a null handle.

 # Safety
 `inst` must be a live handle or null.
 */
size_t cb_instance_source_vertices(const struct CbInstance *inst);

/*
 Writes the ground truth snapped to target vertices (`-1` unmatched).

 # Safety
 `out` must hold `len == cb_instance_source_vertices(inst)` values.
 */
enum CbStatus cb_instance_ground_truth(const struct CbInstance *inst, int64_t *out, size_t len);

/*
 Scores a vertex prediction (`-1` unmatched) and returns the JSON report
 in `*json`, to be released with [`cb_string_free`]. `auc` may be null.

 # Safety
 `pred` must hold `len` values; `json` must be writable.
 */
enum CbStatus cb_instance_evaluate(const struct CbInstance *inst,
                                   const int64_t *pred,
                                   size_t len,
                                   double *auc,
                                   char **json);

/*
 Runs a generation from config text (`key = value` lines). The number of
 generated and failed instances are written when the pointers are set.

 # Safety
 `config` must be a NUL-terminated string.
 */
enum CbStatus cb_run_generation(const char *config, size_t *generated, size_t *failed);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CORRBENCH_H */

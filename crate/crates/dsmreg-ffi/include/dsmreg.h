#ifndef DSMREG_H
#define DSMREG_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes returned by every fallible entry point.
typedef enum DsmregStatus {
  DSMREG_STATUS_OK = 0,
  // File could not be read or written.
  DSMREG_STATUS_IO = 1,
  // File exists but does not parse as a supported raster.
  DSMREG_STATUS_PARSE = 2,
  // Inputs do not overlap where they must.
  DSMREG_STATUS_NO_OVERLAP = 3,
  // Geometry too degenerate to estimate a pose.
  DSMREG_STATUS_DEGENERATE = 4,
  // Scene graph is unusable (disconnected, too few rasters).
  DSMREG_STATUS_GRAPH = 5,
  // A numerical routine failed to converge.
  DSMREG_STATUS_NUMERIC = 6,
  // Bad argument from the caller (null pointer, bad range).
  DSMREG_STATUS_INVALID_ARGUMENT = 7,
  DSMREG_STATUS_OTHER = 8,
} DsmregStatus;

// Opaque raster handle.
typedef struct DsmregGrid DsmregGrid;

// ICP tuning parameters; get defaults from `dsmreg_icp_params_default`.
typedef struct DsmregIcpParams {
  uint64_t n_queries;
  uint64_t max_iterations;
  double rel_tol;
  double abs_tol;
  double trim_fraction;
  double correspondence_reject;
  uint64_t seed;
} DsmregIcpParams;

// Result of one pairwise registration. `rotation` is row-major; the
// transform maps moving-raster points into the reference frame.
typedef struct DsmregRegistration {
  double rotation[9];
  double translation[3];
  double err;
  uint64_t iterations;
  uint64_t n_correspondences;
  double mean_candidates_scanned;
  bool converged;
} DsmregRegistration;

// One scene-graph edge: the pose maps frame `j` into frame `i`.
typedef struct DsmregEdge {
  uint64_t i;
  uint64_t j;
  double rotation[9];
  double translation[3];
  double weight;
} DsmregEdge;

// One global pose (row-major rotation).
typedef struct DsmregPose {
  double rotation[9];
  double translation[3];
} DsmregPose;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *dsmreg_version(void);

// Message describing the most recent failure on this thread. The pointer
// stays valid until the next failing call on the same thread.
const char *dsmreg_last_error_message(void);

// Open a raster file (format inferred). On success `*out` owns the
// handle; release it with [`dsmreg_grid_free`].
//
// # Safety
// `path` must be a valid NUL-terminated string and `out` a valid pointer.
enum DsmregStatus dsmreg_grid_open(const char *path, struct DsmregGrid **out);

// Release a handle returned by [`dsmreg_grid_open`]. Null is a no-op.
//
// # Safety
// `grid` must be a pointer from `dsmreg_grid_open` not yet freed.
void dsmreg_grid_free(struct DsmregGrid *grid);

// # Safety
// `grid` must be a live handle.
uint64_t dsmreg_grid_width(const struct DsmregGrid *grid);

// # Safety
// `grid` must be a live handle.
uint64_t dsmreg_grid_height(const struct DsmregGrid *grid);

// # Safety
// `grid` must be a live handle.
double dsmreg_grid_nodata(const struct DsmregGrid *grid);

// Geotransform in world-file order: x_scale, y_skew, x_skew, y_scale,
// x_origin, y_origin (center of pixel (0,0)).
//
// # Safety
// `grid` must be a live handle and `out` must point to 6 doubles.
enum DsmregStatus dsmreg_grid_geotransform(const struct DsmregGrid *grid, double *out);

// Read a window clipped to the raster extent. `heights` and `mask` must
// hold `capacity` elements; the clipped size is returned through
// `out_width`/`out_height` (row-major, north row first). `mask[k]` is 1
// where the cell is valid.
//
// # Safety
// All pointers must be valid; `heights` and `mask` must have room for
// `capacity` elements.
enum DsmregStatus dsmreg_grid_read_window(const struct DsmregGrid *grid,
                                          int64_t u_min,
                                          int64_t u_max,
                                          int64_t v_min,
                                          int64_t v_max,
                                          double *heights,
                                          uint8_t *mask,
                                          size_t capacity,
                                          uint64_t *out_width,
                                          uint64_t *out_height);

// Default ICP parameters.
//
// # Safety
// `out` must be a valid pointer.
void dsmreg_icp_params_default(struct DsmregIcpParams *out);

// Register `moving` onto `reference` with DSM-ICP from the identity
// initialization. `params` may be null for defaults.
//
// # Safety
// `moving` and `reference` must be live handles; `out` must be valid;
// `params` must be null or valid.
enum DsmregStatus dsmreg_register(const struct DsmregGrid *moving,
                                  const struct DsmregGrid *reference,
                                  const struct DsmregIcpParams *params,
                                  struct DsmregRegistration *out);

// Estimate global poses by motion averaging over weighted relative
// poses. `poses_out` must hold `n_vertices` entries; the anchor pose
// comes back as the identity. `objective_out` may be null.
//
// # Safety
// `edges` must point to `n_edges` entries and `poses_out` to
// `n_vertices` entries.
enum DsmregStatus dsmreg_motion_average(uint64_t n_vertices,
                                        const struct DsmregEdge *edges,
                                        size_t n_edges,
                                        uint64_t anchor,
                                        struct DsmregPose *poses_out,
                                        double *objective_out);

// Greedy baseline: maximum-weight spanning tree chaining. Same contract
// as [`dsmreg_motion_average`].
//
// # Safety
// `edges` must point to `n_edges` entries and `poses_out` to
// `n_vertices` entries.
enum DsmregStatus dsmreg_greedy_mst(uint64_t n_vertices,
                                    const struct DsmregEdge *edges,
                                    size_t n_edges,
                                    uint64_t anchor,
                                    struct DsmregPose *poses_out,
                                    double *objective_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DSMREG_H */

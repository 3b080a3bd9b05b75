/* C interface to the densecount library. Generated by cbindgen; do not edit. */

#ifndef DENSECOUNT_H
#define DENSECOUNT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code for every fallible call.
 */
typedef enum DcStatus {
  DC_STATUS_OK = 0,
  DC_STATUS_NULL_POINTER = 1,
  DC_STATUS_INVALID_ARGUMENT = 2,
  DC_STATUS_UTF8 = 3,
  DC_STATUS_IO = 4,
  DC_STATUS_PARSE = 5,
  DC_STATUS_VALIDATION = 6,
  DC_STATUS_OUT_OF_BOUNDS = 7,
  DC_STATUS_INSUFFICIENT_DATA = 8,
} DcStatus;

/**
 * Opaque per-image point annotation set.
 */
typedef struct DcAnnotations DcAnnotations;

/**
 * Opaque non-negative density grid.
 */
typedef struct DcDensityMap DcDensityMap;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread; never null, valid
 * until the next failing call on the same thread.
 */
const char *dc_last_error_message(void);

/**
 * Library version as a static string.
 */
const char *dc_version(void);

/**
 * Builds an annotation set from parallel coordinate arrays. Every point
 * must satisfy `0 <= x < width`, `0 <= y < height`.
 */
enum DcStatus dc_annotations_new(const char *image_id,
                                 uint32_t width,
                                 uint32_t height,
                                 const double *xs,
                                 const double *ys,
                                 size_t len,
                                 struct DcAnnotations **out);

/**
 * Loads one image's annotations from an annotation file by id.
 */
enum DcStatus dc_annotations_load(const char *path,
                                  const char *image_id,
                                  struct DcAnnotations **out);

size_t dc_annotations_len(const struct DcAnnotations *anns);

void dc_annotations_free(struct DcAnnotations *anns);

/**
 * Ground truth with one fixed-bandwidth unit-mass kernel per point.
 */
enum DcStatus dc_density_generate_fixed(const struct DcAnnotations *anns,
                                        double sigma,
                                        double truncation_radius,
                                        struct DcDensityMap **out);

/**
 * Ground truth with geometry-adaptive bandwidths
 * (`sigma_i = beta * mean distance to the k nearest other points`).
 */
enum DcStatus dc_density_generate_adaptive(const struct DcAnnotations *anns,
                                           size_t k,
                                           double beta,
                                           double fallback_sigma,
                                           double truncation_radius,
                                           struct DcDensityMap **out);

uint32_t dc_density_rows(const struct DcDensityMap *map);

uint32_t dc_density_cols(const struct DcDensityMap *map);

/**
 * Cells per source pixel; 0 on a null handle.
 */
double dc_density_scale(const struct DcDensityMap *map);

/**
 * Copies the row-major cell values into `buffer` (`buffer_len` must be
 * exactly rows * cols).
 */
enum DcStatus dc_density_copy_values(const struct DcDensityMap *map,
                                     double *buffer,
                                     size_t buffer_len);

/**
 * Sum of all cells: the count this grid encodes.
 */
enum DcStatus dc_density_integrate(const struct DcDensityMap *map, double *out);

/**
 * Sum-pools factor x factor blocks; mass is conserved.
 */
enum DcStatus dc_density_downsample(const struct DcDensityMap *map,
                                    uint32_t factor,
                                    struct DcDensityMap **out);

/**
 * Writes the grid as a DGRD file (see the densecount README for the
 * byte layout).
 */
enum DcStatus dc_density_write_dgrd(const struct DcDensityMap *map, const char *path);

/**
 * Reads a DGRD file into a new grid handle.
 */
enum DcStatus dc_density_read_dgrd(const char *path, struct DcDensityMap **out);

void dc_density_free(struct DcDensityMap *map);

/**
 * Cluster-weight yield model: vines/unit x bunches/vine x bunch grams.
 */
double dc_yield_eq1(double vines_per_unit, double bunches_per_vine, double bunch_weight_g);

/**
 * Berry-count yield model: vines/unit x bunches/vine x berries/bunch x
 * berry grams.
 */
double dc_yield_eq2(double vines_per_unit,
                    double bunches_per_vine,
                    double berries_per_bunch,
                    double berry_weight_g);

/**
 * Panoramic yield: field-level berry count x berry grams.
 */
double dc_yield_panoramic(double total_berries, double berry_weight_g);

/**
 * Relative spread of a weight series: mean absolute deviation from the
 * mean over the median. `len` must be positive and every value finite
 * and positive.
 */
enum DcStatus dc_pct_mean_deviation(const double *values, size_t len, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DENSECOUNT_H */

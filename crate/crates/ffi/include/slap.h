#ifndef SLAP_H
#define SLAP_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum SlapStatus {
  SLAP_STATUS_OK = 0,
  SLAP_STATUS_NULL_POINTER = 1,
  SLAP_STATUS_CONFIG = 2,
  SLAP_STATUS_DATA = 3,
  SLAP_STATUS_PREREQUISITE = 4,
  SLAP_STATUS_NUMERICAL = 5,
  SLAP_STATUS_INVALID_ARGUMENT = 6,
  SLAP_STATUS_PANIC = 7,
} SlapStatus;

typedef struct SlapCube SlapCube;

typedef struct SlapGroundTruth SlapGroundTruth;

typedef struct SlapSolution SlapSolution;

/**
 * Accuracy triple returned by evaluation and pipeline calls.
 */
typedef struct SlapMetrics {
  double oa;
  double aa;
  double kappa;
} SlapMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or NULL. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *slap_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *slap_version(void);

/**
 * Builds a cube from band-sequential `float` data of length
 * `height * width * bands`.
 *
 * # Safety
 * `data` must point to `len` readable floats; the output pointer must be writable.
 */
enum SlapStatus slap_cube_new(size_t height,
                              size_t width,
                              size_t bands,
                              const float *data,
                              size_t len,
                              struct SlapCube **out_cube);

/**
 * Loads a cube from its header file.
 *
 * # Safety
 * `header_path` must be a NUL-terminated string; the output pointer must be writable.
 */
enum SlapStatus slap_cube_load(const char *header_path, struct SlapCube **out_cube);

/**
 * # Safety
 * `cube` must come from this library and the output pointers be writable.
 */
enum SlapStatus slap_cube_dims(const struct SlapCube *cube,
                               size_t *height,
                               size_t *width,
                               size_t *bands);

/**
 * # Safety
 * `cube` must be NULL or a handle from this library not yet freed.
 */
void slap_cube_free(struct SlapCube *cube);

/**
 * Ground truth from `height * width` labels, 0 = unlabeled.
 *
 * # Safety
 * `labels` must point to `len` readable values; the output pointer must be writable.
 */
enum SlapStatus slap_ground_truth_new(size_t height,
                                      size_t width,
                                      const uint32_t *labels,
                                      size_t len,
                                      struct SlapGroundTruth **out_gt);

/**
 * Loads an ASCII label raster checked against `cube`'s dimensions.
 *
 * # Safety
 * `path` must be NUL-terminated, `cube` a live handle, the output pointer writable.
 */
enum SlapStatus slap_ground_truth_load(const char *raster_path,
                                       const struct SlapCube *cube,
                                       struct SlapGroundTruth **out_gt);

/**
 * Number of classes `c`.
 *
 * # Safety
 * `gt` must be a live handle and `classes` writable.
 */
enum SlapStatus slap_ground_truth_classes(const struct SlapGroundTruth *gt, size_t *classes);

/**
 * # Safety
 * `gt` must be NULL or a handle from this library not yet freed.
 */
void slap_ground_truth_free(struct SlapGroundTruth *gt);

/**
 * Singular value thresholding of a `rows x cols` matrix into `out`.
 *
 * # Safety
 * `input` and `output` must each hold `rows * cols` doubles.
 */
enum SlapStatus slap_svt(const double *input, size_t rows, size_t cols, double tau, double *output);

/**
 * Column-wise shrinkage (proximal map of the l2,1 norm) into `out`.
 *
 * # Safety
 * `input` and `output` must each hold `rows * cols` doubles.
 */
enum SlapStatus slap_prox_l21(const double *input,
                              size_t rows,
                              size_t cols,
                              double tau,
                              double *output);

/**
 * Solves the low-rank model on one `bands x pixels` block with the default
 * solver schedule and a `k_neighbors` Laplacian prior.
 *
 * # Safety
 * `data` must hold `bands * pixels` doubles; the output pointer must be writable.
 */
enum SlapStatus slap_solve_block(const double *data,
                                 size_t bands,
                                 size_t pixels,
                                 double lambda,
                                 double gamma,
                                 size_t k_neighbors,
                                 struct SlapSolution **out_solution);

/**
 * Iteration count and convergence flag of a solve.
 *
 * # Safety
 * `solution` must be a live handle and the outputs writable.
 */
enum SlapStatus slap_solution_info(const struct SlapSolution *solution,
                                   size_t *iterations,
                                   bool *converged);

/**
 * Copies the `pixels x pixels` coefficient matrix.
 *
 * # Safety
 * `solution` must be a live handle and `output` hold `len` doubles.
 */
enum SlapStatus slap_solution_coefficients(const struct SlapSolution *solution,
                                           double *output,
                                           size_t len);

/**
 * Copies the `bands x pixels` noise matrix.
 *
 * # Safety
 * `solution` must be a live handle and `output` hold `len` doubles.
 */
enum SlapStatus slap_solution_noise(const struct SlapSolution *solution,
                                    double *output,
                                    size_t len);

/**
 * Copies the `bands x pixels` denoised block.
 *
 * # Safety
 * `solution` must be a live handle and `output` hold `len` doubles.
 */
enum SlapStatus slap_solution_denoised(const struct SlapSolution *solution,
                                       double *output,
                                       size_t len);

/**
 * # Safety
 * `solution` must be NULL or a handle from this library not yet freed.
 */
void slap_solution_free(struct SlapSolution *solution);

/**
 * Scores per-pixel predictions on the listed test pixels.
 *
 * # Safety
 * `predictions` must hold `len` labels, `test` hold `test_len` indices and
 * `metrics` be writable.
 */
enum SlapStatus slap_evaluate(const uint32_t *predictions,
                              size_t len,
                              const struct SlapGroundTruth *gt,
                              const size_t *test,
                              size_t test_len,
                              struct SlapMetrics *metrics);

/**
 * Runs the full pipeline from a config file, writing its run directory,
 * and returns the mean metrics over successful trials. Fails with the first
 * trial's status when no trial succeeds.
 *
 * # Safety
 * `config_path` must be NUL-terminated and `mean` writable.
 */
enum SlapStatus slap_pipeline_run(const char *config_path, struct SlapMetrics *mean);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SLAP_H */

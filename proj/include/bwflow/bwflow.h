/* bwflow C API.
 *
 * Every function returns a bwf_status; on failure bwf_last_error() holds a
 * message for the calling thread. Objects are opaque handles released with
 * their *_free function. Matrix payloads are row-major doubles; complex
 * entries are interleaved (re, im). Arrays returned through double/int
 * pointers must be released with bwf_free.
 */
#ifndef BWFLOW_BWFLOW_H
#define BWFLOW_BWFLOW_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define BWF_API __declspec(dllexport)
#else
#define BWF_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum bwf_status {
  BWF_OK = 0,
  BWF_INVALID_ARGUMENT = 1,
  BWF_NON_HERMITIAN = 2,
  BWF_NON_FINITE = 3,
  BWF_NOT_PSD = 4,
  BWF_DIM_MISMATCH = 5,
  BWF_KERNEL_NOT_NESTED = 6,
  BWF_LAMBDA_OUT_OF_RANGE = 7,
  BWF_GRID_MISMATCH = 8,
  BWF_ALL_DEGENERATE = 9,
  BWF_POINTWISE_FAILURE = 10,
  BWF_K_TOO_LARGE = 11,
  BWF_K_OUT_OF_RANGE = 12,
  BWF_LAMBDA_TOO_LARGE = 13,
  BWF_EMPTY_WINDOW = 14,
  BWF_SINGULAR_MOMENTS = 15,
  BWF_NON_CONVERGENCE = 16,
  BWF_SINGULAR_DESIGN = 17,
  BWF_LAG_TOO_LARGE = 18,
  BWF_EMPTY_FREQ_GRID = 19,
  BWF_GRID_TOO_COARSE = 20,
  BWF_WINDOW_TOO_LARGE = 21,
  BWF_RAGGED_SERIES = 22,
  BWF_IO = 23,
  BWF_FORMAT = 24,
  BWF_CONFIG = 25,
  BWF_INTERNAL = 99
} bwf_status;

typedef enum bwf_scalar_kind { BWF_REAL = 0, BWF_COMPLEX = 1 } bwf_scalar_kind;

typedef struct bwf_flowset bwf_flowset;
typedef struct bwf_mean_trace bwf_mean_trace;
typedef struct bwf_pca_model bwf_pca_model;
typedef struct bwf_kmeans_result bwf_kmeans_result;

BWF_API const char* bwf_last_error(void);
BWF_API const char* bwf_status_name(bwf_status status);
BWF_API const char* bwf_version(void);
/* n <= 0 restores the runtime default. */
BWF_API void bwf_set_num_threads(int n);
BWF_API void bwf_free(void* p);

/* ---- flow sets ---- */

enum { BWF_READ_FORCE_PROJECT = 1, BWF_READ_RAW = 2 };

/* data: n_flows * n_times * dim * dim entries. Structural checks only. */
BWF_API bwf_status bwf_flowset_create(bwf_scalar_kind kind, size_t n_flows, size_t n_times, size_t dim,
                                      const double* grid, const double* data, bwf_flowset** out);
BWF_API void bwf_flowset_free(bwf_flowset* set);
BWF_API bwf_status bwf_flowset_info(const bwf_flowset* set, bwf_scalar_kind* kind, size_t* n_flows,
                                    size_t* n_times, size_t* dim);
BWF_API bwf_status bwf_flowset_grid(const bwf_flowset* set, double* out);
BWF_API bwf_status bwf_flowset_data(const bwf_flowset* set, double* out);
BWF_API bwf_status bwf_flowset_read(const char* path, int flags, bwf_flowset** out);
/* Violations found (and repaired, with BWF_READ_FORCE_PROJECT) by the last read on this thread. */
BWF_API size_t bwf_last_read_violations(void);
BWF_API bwf_status bwf_flowset_write(const bwf_flowset* set, const char* path);
/* Hermitian / PSD / finiteness check; writes the number of violations. */
BWF_API bwf_status bwf_flowset_validate(const bwf_flowset* set, size_t* n_violations);
BWF_API bwf_status bwf_flowset_subset(const bwf_flowset* set, const size_t* indices, size_t count,
                                      bwf_flowset** out);
/* Flows of b appended to a; grids, kinds and dims must agree. */
BWF_API bwf_status bwf_flowset_concat(const bwf_flowset* a, const bwf_flowset* b, bwf_flowset** out);

/* ---- geometry ---- */

BWF_API bwf_status bwf_bw_distance(bwf_scalar_kind kind, size_t dim, const double* f, const double* g,
                                   double* out);
BWF_API bwf_status bwf_flow_distance(const bwf_flowset* a, size_t i, const bwf_flowset* b, size_t j,
                                     double* out);
/* out: n * n row-major. */
BWF_API bwf_status bwf_pairwise_distances(const bwf_flowset* set, double* out);

/* ---- Fréchet mean flows ---- */

enum { BWF_MEAN_GD = 0, BWF_MEAN_SGD = 1 };
enum { BWF_RESAMPLE_RESHUFFLE = 0, BWF_RESAMPLE_REPLACEMENT = 1 };

typedef struct bwf_mean_options {
  int algorithm;   /* BWF_MEAN_GD */
  int max_iter;    /* 200 */
  double tol;      /* 1e-8 */
  int warm_start;  /* 1 */
  int sgd_steps;   /* 5000 */
  double sgd_a;    /* 2: step a / (k + b) */
  double sgd_b;    /* 2 */
  uint64_t seed;   /* 0 */
  int resample;    /* BWF_RESAMPLE_RESHUFFLE */
} bwf_mean_options;

BWF_API void bwf_mean_options_default(bwf_mean_options* opts);
/* mean: single-flow set. trace may be NULL. Returns BWF_NON_CONVERGENCE with
 * both outputs filled when some grid point misses the tolerance. */
BWF_API bwf_status bwf_frechet_mean(const bwf_flowset* set, const bwf_mean_options* opts, bwf_flowset** mean,
                                    bwf_mean_trace** trace);
BWF_API size_t bwf_mean_trace_points(const bwf_mean_trace* trace);
BWF_API bwf_status bwf_mean_trace_point(const bwf_mean_trace* trace, size_t j, size_t* length, int* converged);
BWF_API bwf_status bwf_mean_trace_record(const bwf_mean_trace* trace, size_t j, size_t r, int* iteration,
                                         double* functional, double* residual);
BWF_API void bwf_mean_trace_free(bwf_mean_trace* trace);

/* ---- tangent PCA ---- */

/* mean may be NULL (computed by gradient descent). */
BWF_API bwf_status bwf_pca_fit(const bwf_flowset* set, const bwf_flowset* mean, size_t k, bwf_pca_model** out);
BWF_API void bwf_pca_free(bwf_pca_model* model);
BWF_API bwf_status bwf_pca_info(const bwf_pca_model* model, size_t* k, size_t* n_components, size_t* n_flows,
                                double* total_variance, double* mean_field_norm);
BWF_API bwf_status bwf_pca_eigenvalues(const bwf_pca_model* model, double* out);
/* out: n_flows * n_components row-major. */
BWF_API bwf_status bwf_pca_scores(const bwf_pca_model* model, double* out);
BWF_API bwf_status bwf_pca_mean(const bwf_pca_model* model, bwf_flowset** out);
/* Embedded component c as a single-flow set of (non-Hermitian) matrices. */
BWF_API bwf_status bwf_pca_component(const bwf_pca_model* model, size_t c, bwf_flowset** out);
BWF_API bwf_status bwf_pca_lambda_max(const bwf_pca_model* model, size_t c, double* out);
BWF_API bwf_status bwf_pca_mode(const bwf_pca_model* model, size_t c, double lambda, bwf_flowset** out);
/* out: set_n_flows * n_components row-major. */
BWF_API bwf_status bwf_pca_project(const bwf_pca_model* model, const bwf_flowset* set, double* out);

/* ---- smoothing ---- */

enum { BWF_SMOOTH_NW = 0, BWF_SMOOTH_LFR = 1 };
enum { BWF_KERNEL_UNIFORM = 0, BWF_KERNEL_EPANECHNIKOV = 1, BWF_KERNEL_GAUSSIAN = 2 };

typedef struct bwf_smooth_options {
  int mode;          /* BWF_SMOOTH_NW */
  int kernel;        /* BWF_KERNEL_EPANECHNIKOV */
  double bandwidth;  /* 0.1 */
  size_t grid_size;  /* 51 */
  int max_iter;      /* 200, LFR inner barycenter */
  double tol;        /* 1e-8 */
} bwf_smooth_options;

BWF_API void bwf_smooth_options_default(bwf_smooth_options* opts);
/* Real observations; mats: n_obs * dim * dim. converged may be NULL. */
BWF_API bwf_status bwf_smooth(size_t n_obs, size_t dim, const int64_t* flow_ids, const double* times,
                              const double* mats, const bwf_smooth_options* opts, bwf_flowset** out,
                              int* converged);
/* Leave-out cross-validation over candidate bandwidths (mode from opts). */
BWF_API bwf_status bwf_bandwidth_sweep(size_t n_obs, size_t dim, const int64_t* flow_ids, const double* times,
                                       const double* mats, const bwf_smooth_options* opts,
                                       const double* candidates, size_t n_candidates, double* cv_errors,
                                       size_t* failures);
/* Reads a CSV of flow_id, time, m_11..m_dd; arrays released with bwf_free. */
BWF_API bwf_status bwf_read_observations(const char* path, size_t* n_obs, size_t* dim, int64_t** flow_ids,
                                         double** times, double** mats);

/* ---- spectral ---- */

enum { BWF_WINDOW_BARTLETT = 0, BWF_WINDOW_RECT = 1 };

typedef struct bwf_spectral_options {
  size_t max_lag;    /* 20 */
  int window;        /* BWF_WINDOW_BARTLETT */
  int project;       /* 1 */
  size_t n_freqs;    /* 0: 4 max_lag + 1 */
  int difference;    /* 0 */
  int center;        /* 1 */
  size_t ma_width;   /* 0: none */
} bwf_spectral_options;

BWF_API void bwf_spectral_options_default(bwf_spectral_options* opts);
/* values: T * dim row-major. Result: one complex flow on u = omega / pi. */
BWF_API bwf_status bwf_spectral(size_t n_time, size_t dim, const double* values, const bwf_spectral_options* opts,
                                bwf_flowset** out);
/* One flow per series of a CSV with series_id, time_index, x_1..x_d.
 * series_ids (may be NULL) receives n_flows ids, released with bwf_free. */
BWF_API bwf_status bwf_spectral_csv(const char* path, const bwf_spectral_options* opts, bwf_flowset** out,
                                    int64_t** series_ids);
/* Lag-h autocovariance from flow `flow` of a spectral set; out: dim * dim complex interleaved. */
BWF_API bwf_status bwf_invert_sdf(const bwf_flowset* sdf, size_t flow, size_t max_lag, long h, double* out);
/* out: dim * dim real. */
BWF_API bwf_status bwf_autocov(size_t n_time, size_t dim, const double* values, size_t h, double* out);

/* ---- clustering ---- */

enum { BWF_CLUSTER_RAW = 0, BWF_CLUSTER_SCORES = 1 };

typedef struct bwf_kmeans_options {
  int mode;               /* required: BWF_CLUSTER_RAW or BWF_CLUSTER_SCORES */
  size_t restarts;        /* 20 */
  int max_iter;           /* 100 */
  uint64_t seed;          /* 0 */
  const double* scores;   /* scores mode: n_flows * n_score_cols row-major */
  size_t n_score_cols;
} bwf_kmeans_options;

BWF_API void bwf_kmeans_options_default(bwf_kmeans_options* opts);
BWF_API bwf_status bwf_kmeans(const bwf_flowset* set, size_t k, const bwf_kmeans_options* opts,
                              bwf_kmeans_result** out);
BWF_API void bwf_kmeans_free(bwf_kmeans_result* result);
BWF_API bwf_status bwf_kmeans_info(const bwf_kmeans_result* result, double* inertia, double* distortion,
                                   int* n_iter, uint64_t* seed);
BWF_API bwf_status bwf_kmeans_labels(const bwf_kmeans_result* result, int* out);
/* Pass out == NULL to query the length. */
BWF_API bwf_status bwf_kmeans_inertia_trace(const bwf_kmeans_result* result, double* out, size_t* length);
/* Raw mode only: k single-flow centroids as one set. */
BWF_API bwf_status bwf_kmeans_centroids(const bwf_kmeans_result* result, bwf_flowset** out);
/* Rows k_min..k_max; second_diff is NaN at the ends. */
BWF_API bwf_status bwf_elbow(const bwf_flowset* set, size_t k_min, size_t k_max, const bwf_kmeans_options* opts,
                             double* inertia, double* distortion, double* second_diff);

/* ---- simulation and ingestion ---- */

/* JSON config; labels (may be NULL) receives n_flows labels for the bimodal
 * dataset and is set to NULL otherwise. */
BWF_API bwf_status bwf_simulate(const char* json_config, bwf_flowset** out, int** labels);
BWF_API bwf_status bwf_simulate_template(const char* json_config, bwf_flowset** out);

enum { BWF_AVERAGE_EUCLIDEAN = 0, BWF_AVERAGE_FRECHET = 1 };

BWF_API bwf_status bwf_ingest_sliding(const char* csv_path, size_t half_width, size_t stride, int averaging,
                                      bwf_flowset** out, int64_t** subject_ids);

#ifdef __cplusplus
}
#endif

#endif /* BWFLOW_BWFLOW_H */

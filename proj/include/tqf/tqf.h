/* C interface to the tqf library.
 *
 * Every function returning int reports a status code: TQF_OK on success,
 * otherwise the error category, with the message available from
 * tqf_last_error() on the calling thread. Objects are opaque handles released
 * with the matching *_free function; strings returned through char** are
 * released with tqf_string_free. Configuration is passed as JSON text. */
#ifndef TQF_TQF_H
#define TQF_TQF_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(__GNUC__)
#define TQF_API __attribute__((visibility("default")))
#else
#define TQF_API
#endif

enum {
  TQF_OK = 0,
  TQF_ERR_USAGE = 1,
  TQF_ERR_DATA = 2,
  TQF_ERR_NUMERICAL = 3
};

typedef struct tqf_model tqf_model;
typedef struct tqf_slices tqf_slices;
typedef struct tqf_cloud tqf_cloud;

TQF_API const char* tqf_version(void);
TQF_API const char* tqf_last_error(void);
TQF_API void tqf_string_free(char* s);
/* "trace", "debug", "info", "warn", "error" or "off". */
TQF_API int tqf_set_log_level(const char* level);

/* Generator spec JSON: {"name", "n", "seed", "params"}. */
TQF_API int tqf_generate_csv(const char* spec_json, const char* out_path);
/* JSON array of generator names. */
TQF_API int tqf_generator_names(char** out_json);

/* ---- models ---- */

/* csv_json: {"features": [...], "targets": [...], "transforms": {col: "none"|"standardize"|"rank_uniform"}};
 * empty or NULL infers the x- and y-prefixed columns. config_json: TqfConfig document. */
TQF_API int tqf_model_train(const char* csv_path, const char* csv_json, const char* config_json, uint64_t seed,
                            tqf_model** out);
TQF_API int tqf_model_load(const char* path, tqf_model** out);
TQF_API int tqf_model_save(const tqf_model* model, const char* path);
TQF_API void tqf_model_free(tqf_model* model);
/* 16 hex characters plus terminator. */
TQF_API int tqf_model_hash(const tqf_model* model, char out[17]);
TQF_API int tqf_model_dims(const tqf_model* model, int* d, int* p);
/* Model metadata as JSON (dimensions, config, scaler, frequencies). */
TQF_API int tqf_model_info(const tqf_model* model, char** out_json);

/* Directional quantiles of the target at covariates x (length p), on K
 * directions drawn in target units, at M midpoint levels. */
TQF_API int tqf_model_slices(const tqf_model* model, const double* x, size_t p, int K, int M, uint64_t seed,
                             tqf_slices** out);
/* Full prediction: slices, QMEM and the inverse target scaling. The report
 * JSON carries the QMEM losses and timings. */
TQF_API int tqf_model_predict(const tqf_model* model, const double* x, size_t p, const char* qmem_json,
                              uint64_t seed, tqf_cloud** out, char** report_json);

/* ---- slices ---- */

TQF_API int tqf_slices_load(const char* path, tqf_slices** out);
TQF_API int tqf_slices_save(const tqf_slices* s, const char* path, const char* provenance_json);
TQF_API void tqf_slices_free(tqf_slices* s);
TQF_API int tqf_slices_dims(const tqf_slices* s, int* d, int* K, int* M);
/* Hazen quantiles of a cloud on K random directions at M midpoint levels. */
TQF_API int tqf_slices_from_cloud(const tqf_cloud* c, int K, int M, uint64_t seed, tqf_slices** out);

/* ---- QMEM ---- */

TQF_API int tqf_qmem(const tqf_slices* s, const char* qmem_json, uint64_t seed, tqf_cloud** out,
                     char** report_json);

/* ---- clouds ---- */

TQF_API int tqf_cloud_load(const char* path, tqf_cloud** out);
/* CSV sample: every column is a coordinate, uniform weights. */
TQF_API int tqf_cloud_load_csv(const char* path, tqf_cloud** out);
/* Cloud file when the path ends in .json, CSV sample otherwise. */
TQF_API int tqf_cloud_load_any(const char* path, tqf_cloud** out);
TQF_API int tqf_cloud_from_points(const double* points, const double* weights, size_t J, size_t d, tqf_cloud** out);
TQF_API int tqf_cloud_save(const tqf_cloud* c, const char* path, const char* provenance_json);
TQF_API void tqf_cloud_free(tqf_cloud* c);
TQF_API int tqf_cloud_dims(const tqf_cloud* c, size_t* J, size_t* d);
/* Copies J*d row-major points and J weights; either pointer may be NULL. */
TQF_API int tqf_cloud_copy(const tqf_cloud* c, double* points, double* weights);
/* Long-format x,y,density grid of the cloud's KDE (d = 2 only). */
TQF_API int tqf_cloud_kde_grid(const tqf_cloud* c, const char* path, int cells);

/* ---- scoring ---- */

/* options_json: {"metrics": ["ed","es","crps","sw1","nll"], "directions": K, "seed": s}.
 * ref rows are the observations for ES, CRPS and NLL. */
TQF_API int tqf_score(const tqf_cloud* pred, const tqf_cloud* ref, const char* options_json, char** report_json);

/* ---- benchmarks ---- */

TQF_API int tqf_benchmark_names(char** out_json);
/* options_json: {"seeds", "base_seed", "quick", "resume_dir", "csv"}. all_pass
 * receives 1 when every verdict passed. */
TQF_API int tqf_benchmark(const char* name, const char* options_json, char** report_text, char** report_json,
                          int* all_pass);

#ifdef __cplusplus
}
#endif

#endif

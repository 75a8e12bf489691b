#ifndef LRP4RAG_LRP4RAG_H
#define LRP4RAG_LRP4RAG_H

#include <stddef.h>
#include <stdint.h>

#if defined(LRP4RAG_BUILDING_LIBRARY)
#define LRP_API __attribute__((visibility("default")))
#else
#define LRP_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Every fallible call returns a status; on failure lrp_last_error() holds a
 * message for the calling thread until its next call. */
typedef enum lrp_status {
  LRP_OK = 0,
  LRP_ERR_ARGUMENT = 1, /* null handle, bad enum value */
  LRP_ERR_SHAPE = 2,
  LRP_ERR_FORMAT = 3, /* malformed file or record */
  LRP_ERR_CAPACITY = 4, /* sequence longer than the model allows */
  LRP_ERR_CONFIG = 5,
  LRP_ERR_TRAINING = 6,
  LRP_ERR_GRAPH = 7,
  LRP_ERR_IO = 8,
  LRP_ERR_SIZE = 9,
  LRP_ERR_PARTIAL = 10, /* some samples failed, the rest completed */
  LRP_ERR_INTERNAL = 11
} lrp_status;

LRP_API const char* lrp_last_error(void);
LRP_API const char* lrp_status_name(lrp_status status);
LRP_API const char* lrp_version(void);

/* ---- matrices ---------------------------------------------------------- */

typedef struct lrp_matrix lrp_matrix;

/* `data` is row-major rows*cols doubles; NULL gives zeros. */
LRP_API lrp_status lrp_matrix_create(size_t rows, size_t cols, const double* data, lrp_matrix** out);
LRP_API void lrp_matrix_free(lrp_matrix* m);
LRP_API size_t lrp_matrix_rows(const lrp_matrix* m);
LRP_API size_t lrp_matrix_cols(const lrp_matrix* m);
/* Copies rows*cols values; `capacity` counts doubles. */
LRP_API lrp_status lrp_matrix_read(const lrp_matrix* m, double* out, size_t capacity);

/* "LRPM" binary file, values stored as f32. */
LRP_API lrp_status lrp_matrix_export(const lrp_matrix* m, const char* path);
LRP_API lrp_status lrp_matrix_import(const char* path, lrp_matrix** out);
LRP_API lrp_status lrp_matrix_export_csv(const lrp_matrix* m, const char* path);
LRP_API lrp_status lrp_matrix_import_csv(const char* path, lrp_matrix** out);

/* ---- toy transformer ----------------------------------------------------- */

typedef struct lrp_model lrp_model;

typedef struct lrp_model_config {
  size_t vocab_size;
  size_t d_model;
  size_t n_heads;
  size_t n_layers;
  size_t d_ff;
  size_t max_seq_len;
  double ln_eps;
  double embedding_std;
  int tie_head; /* output head starts as the transposed token embedding */
} lrp_model_config;

LRP_API void lrp_model_config_default(lrp_model_config* config);
LRP_API lrp_status lrp_model_random(const lrp_model_config* config, uint64_t seed, lrp_model** out);
LRP_API lrp_status lrp_model_load(const char* path, lrp_model** out);
LRP_API lrp_status lrp_model_save(const lrp_model* model, const char* path);
LRP_API void lrp_model_free(lrp_model* model);

typedef struct lrp_relevance_options {
  size_t max_new;     /* greedy budget for records without a response */
  int32_t stop_token;
  size_t jobs;        /* worker threads */
  double epsilon;     /* relevance normalization stabilizer */
  int normalize_per_entry;
} lrp_relevance_options;

LRP_API void lrp_relevance_options_default(lrp_relevance_options* options);

/* Reads a JSONL corpus, writes one matrix per record plus manifest.jsonl into
 * `out_dir`. Returns LRP_ERR_PARTIAL when some records failed (listed in
 * out_dir/failures.log); `n_failed` may be NULL. */
LRP_API lrp_status lrp_run_relevance(const lrp_model* model, const char* corpus_path, const char* out_dir,
                                     const lrp_relevance_options* options, size_t* n_failed);

/* ---- datasets of labelled relevance matrices ----------------------------- */

typedef struct lrp_dataset lrp_dataset;

/* `path` is a manifest.jsonl or the directory holding one. */
LRP_API lrp_status lrp_dataset_load(const char* path, lrp_dataset** out);
LRP_API lrp_status lrp_dataset_save(const lrp_dataset* dataset, const char* dir);
LRP_API void lrp_dataset_free(lrp_dataset* dataset);
LRP_API size_t lrp_dataset_size(const lrp_dataset* dataset);
/* label: 1 hallucinated, 0 normal, -1 unlabelled. */
LRP_API lrp_status lrp_dataset_label(const lrp_dataset* dataset, size_t index, int* label);
LRP_API lrp_status lrp_dataset_matrix(const lrp_dataset* dataset, size_t index, lrp_matrix** out);

typedef struct lrp_synth_spec {
  size_t n_samples;
  double hallucination_rate;
  double delta; /* mean gap between normal and hallucinated cells */
  size_t rows;
  size_t cols;
  double mu;
  double sigma;
  uint64_t seed;
} lrp_synth_spec;

LRP_API void lrp_synth_spec_default(lrp_synth_spec* spec);
LRP_API lrp_status lrp_synth(const lrp_synth_spec* spec, lrp_dataset** out);

/* ---- analysis ------------------------------------------------------------ */

typedef enum lrp_method { LRP_METHOD_THRESHOLD = 0, LRP_METHOD_SVM, LRP_METHOD_MLP, LRP_METHOD_LSTM } lrp_method;
typedef enum lrp_feature { LRP_FEATURE_PROMPT = 0, LRP_FEATURE_RESPONSE, LRP_FEATURE_CONCAT } lrp_feature;
typedef enum lrp_figure { LRP_FIGURE_BOX = 0, LRP_FIGURE_LINE, LRP_FIGURE_HEATMAP } lrp_figure;

typedef struct lrp_metrics {
  double accuracy;
  double precision;
  double recall;
  double f1;
  size_t tp, fp, tn, fn;
} lrp_metrics;

typedef struct lrp_detect_options {
  lrp_method method;
  lrp_feature feature;
  size_t l_new;
  size_t k;
  uint64_t seed;
  double grid_start, grid_stop, grid_step; /* threshold candidates */
  double svm_gamma; /* <= 0: 1 / (dim * variance) */
  double svm_c;
  size_t mlp_hidden;
  size_t mlp_epochs;
  double mlp_lr;
  size_t lstm_hidden;
  size_t lstm_layers;
  size_t lstm_epochs;
  double lstm_lr;
  size_t lstm_batch;
  size_t t_fix; /* lstm input shape */
  size_t p_fix;
} lrp_detect_options;

LRP_API void lrp_detect_options_default(lrp_detect_options* options);

/* Reports carry CSV and text renderings plus named scalars. */
typedef struct lrp_report lrp_report;

LRP_API void lrp_report_free(lrp_report* report);
LRP_API const char* lrp_report_csv(const lrp_report* report);
LRP_API const char* lrp_report_text(const lrp_report* report);
LRP_API lrp_status lrp_report_write_csv(const lrp_report* report, const char* path);
/* detect: pooled metrics (fold = -1) or one fold's. */
LRP_API size_t lrp_report_fold_count(const lrp_report* report);
LRP_API lrp_status lrp_report_metrics(const lrp_report* report, int fold, lrp_metrics* out);
/* sweep: "auc"; utest: "prompt", "response". */
LRP_API lrp_status lrp_report_scalar(const lrp_report* report, const char* name, double* out);

/* k-fold cross-validated detection. */
LRP_API lrp_status lrp_detect(const lrp_dataset* dataset, const lrp_detect_options* options, lrp_report** out);
/* Trains on the whole dataset and writes an "RPCM" model file. */
LRP_API lrp_status lrp_detect_save_model(const lrp_dataset* dataset, const lrp_detect_options* options,
                                         const char* path);

LRP_API lrp_status lrp_sweep(const lrp_dataset* dataset, lrp_feature feature, size_t l_new, double grid_start,
                             double grid_stop, double grid_step, lrp_report** out);

typedef struct lrp_utest_options {
  size_t n;
  size_t iters;
  uint64_t seed;
  size_t l_new;
  int prompt;   /* test the prompt statistic */
  int response; /* test the response statistic */
} lrp_utest_options;

LRP_API void lrp_utest_options_default(lrp_utest_options* options);
LRP_API lrp_status lrp_utest(const lrp_dataset* dataset, const lrp_utest_options* options, lrp_report** out);

LRP_API lrp_status lrp_figure_csv(const lrp_dataset* dataset, lrp_figure kind, size_t l_new, size_t heat_rows,
                                  size_t heat_cols, const char* path);

#ifdef __cplusplus
}
#endif

#endif

#include "lrp4rag/lrp4rag.h"

#include <cstring>
#include <fstream>
#include <map>
#include <new>
#include <string>

#include "core/corpus.hpp"
#include "core/error.hpp"
#include "core/figures.hpp"
#include "core/matrix_file.hpp"
#include "core/model_io.hpp"
#include "core/pipeline.hpp"

using namespace lrp4rag;

struct lrp_matrix {
  Matrix m;
};

struct lrp_model {
  TransformerParams params;
};

struct lrp_dataset {
  std::vector<RelevanceSample> samples;
};

struct lrp_report {
  std::string csv;
  std::string text;
  std::vector<ClassifierMetrics> folds;
  std::optional<ClassifierMetrics> pooled;
  std::map<std::string, double> scalars;
};

namespace {

thread_local std::string g_last_error;

lrp_status status_of(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kShape: return LRP_ERR_SHAPE;
    case ErrorKind::kFormat: return LRP_ERR_FORMAT;
    case ErrorKind::kCapacity: return LRP_ERR_CAPACITY;
    case ErrorKind::kConfig: return LRP_ERR_CONFIG;
    case ErrorKind::kTraining: return LRP_ERR_TRAINING;
    case ErrorKind::kGraph: return LRP_ERR_GRAPH;
    case ErrorKind::kIo: return LRP_ERR_IO;
    case ErrorKind::kSize: return LRP_ERR_SIZE;
  }
  return LRP_ERR_INTERNAL;
}

lrp_status set_error(lrp_status status, std::string message) {
  g_last_error = std::move(message);
  return status;
}

// Runs `body`, translating exceptions into status codes.
template <class F>
lrp_status guard(F&& body) {
  g_last_error.clear();
  try {
    return body();
  } catch (const Error& e) {
    return set_error(status_of(e.kind()), e.what());
  } catch (const std::bad_alloc&) {
    return set_error(LRP_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return set_error(LRP_ERR_INTERNAL, e.what());
  }
}

#define LRP_REQUIRE(cond, what) \
  if (!(cond)) return set_error(LRP_ERR_ARGUMENT, what)

lrp_metrics to_c(const ClassifierMetrics& m) {
  return {m.accuracy, m.precision, m.recall, m.f1, m.tp, m.fp, m.tn, m.fn};
}

DetectOptions to_core(const lrp_detect_options& o) {
  DetectOptions d;
  switch (o.method) {
    case LRP_METHOD_THRESHOLD: d.method = DetectMethod::kThreshold; break;
    case LRP_METHOD_SVM: d.method = DetectMethod::kSvm; break;
    case LRP_METHOD_MLP: d.method = DetectMethod::kMlp; break;
    case LRP_METHOD_LSTM: d.method = DetectMethod::kLstm; break;
    default: fail(ErrorKind::kConfig, "unknown detection method");
  }
  switch (o.feature) {
    case LRP_FEATURE_PROMPT: d.feature = FeatureSource::kPrompt; break;
    case LRP_FEATURE_RESPONSE: d.feature = FeatureSource::kResponse; break;
    case LRP_FEATURE_CONCAT: d.feature = FeatureSource::kConcat; break;
    default: fail(ErrorKind::kConfig, "unknown feature source");
  }
  d.l_new = o.l_new;
  d.k = o.k;
  d.seed = o.seed;
  d.grid = {o.grid_start, o.grid_stop, o.grid_step};
  d.svm.gamma = o.svm_gamma;
  d.svm.c = o.svm_c;
  d.mlp.hidden = o.mlp_hidden;
  d.mlp.epochs = o.mlp_epochs;
  d.mlp.lr = o.mlp_lr;
  d.lstm.hidden = o.lstm_hidden;
  d.lstm.layers = o.lstm_layers;
  d.lstm.epochs = o.lstm_epochs;
  d.lstm.lr = o.lstm_lr;
  d.lstm.batch_size = o.lstm_batch;
  d.t_fix = o.t_fix;
  d.p_fix = o.p_fix;
  return d;
}

FeatureSource feature_of(lrp_feature f) {
  switch (f) {
    case LRP_FEATURE_PROMPT: return FeatureSource::kPrompt;
    case LRP_FEATURE_RESPONSE: return FeatureSource::kResponse;
    case LRP_FEATURE_CONCAT: return FeatureSource::kConcat;
  }
  fail(ErrorKind::kConfig, "unknown feature source");
}

}  // namespace

extern "C" {

const char* lrp_last_error(void) { return g_last_error.c_str(); }

const char* lrp_status_name(lrp_status status) {
  switch (status) {
    case LRP_OK: return "ok";
    case LRP_ERR_ARGUMENT: return "argument error";
    case LRP_ERR_SHAPE: return "shape error";
    case LRP_ERR_FORMAT: return "format error";
    case LRP_ERR_CAPACITY: return "capacity error";
    case LRP_ERR_CONFIG: return "configuration error";
    case LRP_ERR_TRAINING: return "training error";
    case LRP_ERR_GRAPH: return "graph error";
    case LRP_ERR_IO: return "i/o error";
    case LRP_ERR_SIZE: return "size error";
    case LRP_ERR_PARTIAL: return "partial failure";
    case LRP_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

const char* lrp_version(void) { return "0.1.0"; }

// ---- matrices

lrp_status lrp_matrix_create(size_t rows, size_t cols, const double* data, lrp_matrix** out) {
  LRP_REQUIRE(out, "null output pointer");
  return guard([&] {
    std::vector<double> v(rows * cols, 0.0);
    if (data) std::copy(data, data + rows * cols, v.begin());
    *out = new lrp_matrix{Matrix(rows, cols, std::move(v))};
    return LRP_OK;
  });
}

void lrp_matrix_free(lrp_matrix* m) { delete m; }
size_t lrp_matrix_rows(const lrp_matrix* m) { return m ? m->m.rows() : 0; }
size_t lrp_matrix_cols(const lrp_matrix* m) { return m ? m->m.cols() : 0; }

lrp_status lrp_matrix_read(const lrp_matrix* m, double* out, size_t capacity) {
  LRP_REQUIRE(m && out, "null argument");
  const auto v = m->m.values();
  if (capacity < v.size()) return set_error(LRP_ERR_SIZE, "buffer holds fewer values than the matrix");
  std::copy(v.begin(), v.end(), out);
  return LRP_OK;
}

lrp_status lrp_matrix_export(const lrp_matrix* m, const char* path) {
  LRP_REQUIRE(m && path, "null argument");
  return guard([&] {
    export_matrix(m->m, path);
    return LRP_OK;
  });
}

lrp_status lrp_matrix_import(const char* path, lrp_matrix** out) {
  LRP_REQUIRE(path && out, "null argument");
  return guard([&] {
    *out = new lrp_matrix{import_matrix(path)};
    return LRP_OK;
  });
}

lrp_status lrp_matrix_export_csv(const lrp_matrix* m, const char* path) {
  LRP_REQUIRE(m && path, "null argument");
  return guard([&] {
    std::ofstream out(path, std::ios::trunc);
    if (!out) fail(ErrorKind::kIo, std::string("cannot open ") + path + " for writing");
    write_matrix_csv(m->m, out);
    if (!out) fail(ErrorKind::kIo, std::string("short write to ") + path);
    return LRP_OK;
  });
}

lrp_status lrp_matrix_import_csv(const char* path, lrp_matrix** out) {
  LRP_REQUIRE(path && out, "null argument");
  return guard([&] {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::kIo, std::string("cannot open ") + path);
    *out = new lrp_matrix{read_matrix_csv(in)};
    return LRP_OK;
  });
}

// ---- model

void lrp_model_config_default(lrp_model_config* config) {
  if (!config) return;
  const TransformerConfig c;
  const InitOptions init;
  *config = {c.vocab_size, c.d_model, c.n_heads, c.n_layers, c.d_ff, c.max_seq_len, c.ln_eps,
             init.embedding_std, init.tie_head ? 1 : 0};
}

lrp_status lrp_model_random(const lrp_model_config* config, uint64_t seed, lrp_model** out) {
  LRP_REQUIRE(config && out, "null argument");
  return guard([&] {
    TransformerConfig c{config->vocab_size, config->d_model, config->n_heads, config->n_layers,
                        config->d_ff, config->max_seq_len, config->ln_eps};
    InitOptions init{config->embedding_std, config->tie_head != 0};
    *out = new lrp_model{TransformerParams::random(c, seed, init)};
    return LRP_OK;
  });
}

lrp_status lrp_model_load(const char* path, lrp_model** out) {
  LRP_REQUIRE(path && out, "null argument");
  return guard([&] {
    *out = new lrp_model{load_params(path)};
    return LRP_OK;
  });
}

lrp_status lrp_model_save(const lrp_model* model, const char* path) {
  LRP_REQUIRE(model && path, "null argument");
  return guard([&] {
    save_params(model->params, path);
    return LRP_OK;
  });
}

void lrp_model_free(lrp_model* model) { delete model; }

void lrp_relevance_options_default(lrp_relevance_options* options) {
  if (!options) return;
  const RelevanceOptions r;
  *options = {r.max_new, r.stop_token, r.jobs, r.lrp.epsilon, r.lrp.normalize_per_entry ? 1 : 0};
}

lrp_status lrp_run_relevance(const lrp_model* model, const char* corpus_path, const char* out_dir,
                             const lrp_relevance_options* options, size_t* n_failed) {
  LRP_REQUIRE(model && corpus_path && out_dir, "null argument");
  return guard([&] {
    RelevanceOptions r;
    if (options) {
      r.max_new = options->max_new;
      r.stop_token = options->stop_token;
      r.jobs = options->jobs;
      r.lrp.epsilon = options->epsilon;
      r.lrp.normalize_per_entry = options->normalize_per_entry != 0;
    }
    const auto corpus = load_corpus(corpus_path);
    const auto run = run_relevance(corpus, model->params, out_dir, r);
    if (n_failed) *n_failed = run.failures.size();
    if (run.failures.empty()) return LRP_OK;
    std::string msg = std::to_string(run.failures.size()) + " of " + std::to_string(corpus.size()) +
                      " records failed; first: " + run.failures.front().id + ": " + run.failures.front().message;
    return set_error(LRP_ERR_PARTIAL, std::move(msg));
  });
}

// ---- datasets

lrp_status lrp_dataset_load(const char* path, lrp_dataset** out) {
  LRP_REQUIRE(path && out, "null argument");
  return guard([&] {
    *out = new lrp_dataset{load_dataset(path)};
    return LRP_OK;
  });
}

lrp_status lrp_dataset_save(const lrp_dataset* dataset, const char* dir) {
  LRP_REQUIRE(dataset && dir, "null argument");
  return guard([&] {
    write_dataset(dataset->samples, dir);
    return LRP_OK;
  });
}

void lrp_dataset_free(lrp_dataset* dataset) { delete dataset; }
size_t lrp_dataset_size(const lrp_dataset* dataset) { return dataset ? dataset->samples.size() : 0; }

lrp_status lrp_dataset_label(const lrp_dataset* dataset, size_t index, int* label) {
  LRP_REQUIRE(dataset && label, "null argument");
  if (index >= dataset->samples.size()) return set_error(LRP_ERR_SIZE, "sample index out of range");
  const auto& l = dataset->samples[index].label;
  *label = l ? (*l ? 1 : 0) : -1;
  return LRP_OK;
}

lrp_status lrp_dataset_matrix(const lrp_dataset* dataset, size_t index, lrp_matrix** out) {
  LRP_REQUIRE(dataset && out, "null argument");
  if (index >= dataset->samples.size()) return set_error(LRP_ERR_SIZE, "sample index out of range");
  return guard([&] {
    *out = new lrp_matrix{dataset->samples[index].r_star};
    return LRP_OK;
  });
}

void lrp_synth_spec_default(lrp_synth_spec* spec) {
  if (!spec) return;
  const SynthSpec s;
  *spec = {s.n_samples, s.hallucination_rate, s.delta, s.rows, s.cols, s.mu, s.sigma, s.seed};
}

lrp_status lrp_synth(const lrp_synth_spec* spec, lrp_dataset** out) {
  LRP_REQUIRE(spec && out, "null argument");
  return guard([&] {
    SynthSpec s{spec->n_samples, spec->hallucination_rate, spec->delta, spec->rows,
                spec->cols,      spec->mu,                 spec->sigma, spec->seed};
    *out = new lrp_dataset{synth_corpus(s)};
    return LRP_OK;
  });
}

// ---- analysis

void lrp_detect_options_default(lrp_detect_options* options) {
  if (!options) return;
  const DetectOptions d;
  lrp_detect_options o{};
  o.method = LRP_METHOD_SVM;
  o.feature = LRP_FEATURE_RESPONSE;
  o.l_new = d.l_new;
  o.k = d.k;
  o.seed = d.seed;
  o.grid_start = d.grid.start;
  o.grid_stop = d.grid.stop;
  o.grid_step = d.grid.step;
  o.svm_gamma = d.svm.gamma;
  o.svm_c = d.svm.c;
  o.mlp_hidden = d.mlp.hidden;
  o.mlp_epochs = d.mlp.epochs;
  o.mlp_lr = d.mlp.lr;
  o.lstm_hidden = d.lstm.hidden;
  o.lstm_layers = d.lstm.layers;
  o.lstm_epochs = d.lstm.epochs;
  o.lstm_lr = d.lstm.lr;
  o.lstm_batch = d.lstm.batch_size;
  o.t_fix = d.t_fix;
  o.p_fix = d.p_fix;
  *options = o;
}

void lrp_report_free(lrp_report* report) { delete report; }
const char* lrp_report_csv(const lrp_report* report) { return report ? report->csv.c_str() : ""; }
const char* lrp_report_text(const lrp_report* report) { return report ? report->text.c_str() : ""; }
size_t lrp_report_fold_count(const lrp_report* report) { return report ? report->folds.size() : 0; }

lrp_status lrp_report_write_csv(const lrp_report* report, const char* path) {
  LRP_REQUIRE(report && path, "null argument");
  std::ofstream out(path, std::ios::trunc);
  if (!out) return set_error(LRP_ERR_IO, std::string("cannot open ") + path + " for writing");
  out << report->csv;
  if (!out) return set_error(LRP_ERR_IO, std::string("short write to ") + path);
  return LRP_OK;
}

lrp_status lrp_report_metrics(const lrp_report* report, int fold, lrp_metrics* out) {
  LRP_REQUIRE(report && out, "null argument");
  if (fold < 0) {
    if (!report->pooled) return set_error(LRP_ERR_ARGUMENT, "report holds no metrics");
    *out = to_c(*report->pooled);
    return LRP_OK;
  }
  if (static_cast<size_t>(fold) >= report->folds.size()) return set_error(LRP_ERR_SIZE, "fold out of range");
  *out = to_c(report->folds[static_cast<size_t>(fold)]);
  return LRP_OK;
}

lrp_status lrp_report_scalar(const lrp_report* report, const char* name, double* out) {
  LRP_REQUIRE(report && name && out, "null argument");
  const auto it = report->scalars.find(name);
  if (it == report->scalars.end()) return set_error(LRP_ERR_ARGUMENT, std::string("report has no value ") + name);
  *out = it->second;
  return LRP_OK;
}

lrp_status lrp_detect(const lrp_dataset* dataset, const lrp_detect_options* options, lrp_report** out) {
  LRP_REQUIRE(dataset && options && out, "null argument");
  return guard([&] {
    const auto report = run_detect(dataset->samples, to_core(*options));
    auto* r = new lrp_report;
    r->csv = detect_csv(report);
    r->text = detect_text(report);
    for (const auto& f : report.cv.folds) r->folds.push_back(f.metrics);
    r->pooled = report.cv.pooled;
    *out = r;
    return LRP_OK;
  });
}

lrp_status lrp_detect_save_model(const lrp_dataset* dataset, const lrp_detect_options* options, const char* path) {
  LRP_REQUIRE(dataset && options && path, "null argument");
  return guard([&] {
    save_model(fit_detector(dataset->samples, to_core(*options)), path);
    return LRP_OK;
  });
}

lrp_status lrp_sweep(const lrp_dataset* dataset, lrp_feature feature, size_t l_new, double grid_start,
                     double grid_stop, double grid_step, lrp_report** out) {
  LRP_REQUIRE(dataset && out, "null argument");
  return guard([&] {
    const auto report = run_sweep(dataset->samples, feature_of(feature), l_new, {grid_start, grid_stop, grid_step});
    auto* r = new lrp_report;
    r->csv = sweep_csv(report);
    char buf[128];
    std::snprintf(buf, sizeof(buf), "sweep over %zu thresholds, AUC %.4f\n", report.rows.size(), report.auc);
    r->text = buf;
    r->scalars["auc"] = report.auc;
    *out = r;
    return LRP_OK;
  });
}

void lrp_utest_options_default(lrp_utest_options* options) {
  if (!options) return;
  const UtestOptions u;
  *options = {u.n, u.iters, u.seed, u.l_new, 1, 1};
}

lrp_status lrp_utest(const lrp_dataset* dataset, const lrp_utest_options* options, lrp_report** out) {
  LRP_REQUIRE(dataset && options && out, "null argument");
  return guard([&] {
    UtestOptions u;
    u.n = options->n;
    u.iters = options->iters;
    u.seed = options->seed;
    u.l_new = options->l_new;
    u.statistics.clear();
    if (options->prompt) u.statistics.push_back(FeatureSource::kPrompt);
    if (options->response) u.statistics.push_back(FeatureSource::kResponse);
    if (u.statistics.empty()) fail(ErrorKind::kConfig, "no statistic selected");
    const auto rows = run_utest(dataset->samples, u);
    auto* r = new lrp_report;
    r->csv = utest_csv(rows, u);
    for (const auto& row : rows) {
      r->scalars[feature_name(row.statistic)] = row.median_p;
      char buf[160];
      std::snprintf(buf, sizeof(buf), "%-8s median p %.4g over %zu draws of %zu per class\n",
                    feature_name(row.statistic), row.median_p, u.iters, u.n);
      r->text += buf;
    }
    *out = r;
    return LRP_OK;
  });
}

lrp_status lrp_figure_csv(const lrp_dataset* dataset, lrp_figure kind, size_t l_new, size_t heat_rows,
                          size_t heat_cols, const char* path) {
  LRP_REQUIRE(dataset && path, "null argument");
  return guard([&] {
    FigureKind k;
    switch (kind) {
      case LRP_FIGURE_BOX: k = FigureKind::kBox; break;
      case LRP_FIGURE_LINE: k = FigureKind::kLine; break;
      case LRP_FIGURE_HEATMAP: k = FigureKind::kHeatmap; break;
      default: fail(ErrorKind::kConfig, "unknown figure kind");
    }
    emit_figure_csv(k, dataset->samples, path, {l_new, heat_rows, heat_cols});
    return LRP_OK;
  });
}

}  // extern "C"

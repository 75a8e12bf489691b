#include "core/pipeline.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <random>
#include <sstream>
#include <thread>

#include "core/error.hpp"
#include "core/matrix_file.hpp"
#include "core/stats.hpp"

namespace lrp4rag {

namespace fs = std::filesystem;
using nlohmann::json;

// --- manifest and datasets -------------------------------------------------

void write_manifest(const std::vector<ManifestEntry>& entries, const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorKind::kIo, "cannot open " + path.string() + " for writing");
  for (const auto& e : entries) {
    json line = json::object();
    line["id"] = e.id;
    line["file"] = e.file;
    line["label"] = e.label ? json(*e.label) : json(nullptr);
    line["rows"] = e.rows;
    line["cols"] = e.cols;
    out << line.dump() << '\n';
  }
  if (!out) fail(ErrorKind::kIo, "short write to " + path.string());
}

std::vector<ManifestEntry> read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kIo, "cannot open manifest " + path.string());
  std::vector<ManifestEntry> entries;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string at = path.string() + ":" + std::to_string(line_no) + ": ";
    try {
      const json obj = json::parse(line);
      ManifestEntry e;
      e.id = obj.at("id").get<std::string>();
      e.file = obj.at("file").get<std::string>();
      if (auto it = obj.find("label"); it != obj.end() && !it->is_null()) e.label = it->get<bool>();
      e.rows = obj.value("rows", std::size_t{0});
      e.cols = obj.value("cols", std::size_t{0});
      entries.push_back(std::move(e));
    } catch (const json::exception& e) {
      fail(ErrorKind::kFormat, at + e.what());
    }
  }
  return entries;
}

std::string sample_file_name(std::size_t index, const std::string& id) {
  std::string safe;
  for (char ch : id.substr(0, 64)) {
    const bool ok = std::isalnum(static_cast<unsigned char>(ch)) || ch == '-' || ch == '_' || ch == '.';
    safe.push_back(ok ? ch : '_');
  }
  char prefix[32];
  std::snprintf(prefix, sizeof(prefix), "%06zu_", index);
  return prefix + safe + ".lrpm";
}

std::vector<ManifestEntry> write_dataset(const std::vector<RelevanceSample>& samples, const fs::path& dir) {
  fs::create_directories(dir);
  std::vector<ManifestEntry> entries;
  entries.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    ManifestEntry e{s.id, sample_file_name(i, s.id), s.label, s.r_star.rows(), s.r_star.cols()};
    export_matrix(s.r_star, dir / e.file);
    entries.push_back(std::move(e));
  }
  write_manifest(entries, dir / kManifestName);
  return entries;
}

std::vector<RelevanceSample> load_dataset(const fs::path& manifest_or_dir) {
  const fs::path manifest = fs::is_directory(manifest_or_dir) ? manifest_or_dir / kManifestName : manifest_or_dir;
  const fs::path base = manifest.parent_path();
  std::vector<RelevanceSample> samples;
  for (const auto& e : read_manifest(manifest)) {
    Matrix m = import_matrix(base / e.file);
    if ((e.rows || e.cols) && (m.rows() != e.rows || m.cols() != e.cols)) {
      fail(ErrorKind::kFormat, "manifest says " + std::to_string(e.rows) + "x" + std::to_string(e.cols) + " for " +
                                   e.file + ", file holds " + m.shape_string());
    }
    samples.push_back({e.id, std::move(m), e.label});
  }
  return samples;
}

// --- synthetic corpus ------------------------------------------------------

void SynthSpec::validate() const {
  if (n_samples == 0) fail(ErrorKind::kConfig, "synth: n_samples must be positive");
  if (!(hallucination_rate > 0.0 && hallucination_rate < 1.0)) fail(ErrorKind::kConfig, "synth: rate must be in (0,1)");
  if (!(delta >= 0.0) || !std::isfinite(delta)) fail(ErrorKind::kConfig, "synth: delta must be >= 0");
  if (rows == 0 || cols == 0) fail(ErrorKind::kConfig, "synth: matrix shape must be positive");
  if (!(sigma > 0.0) || !std::isfinite(sigma)) fail(ErrorKind::kConfig, "synth: sigma must be positive");
  if (!(mu > 0.0) || !std::isfinite(mu)) fail(ErrorKind::kConfig, "synth: mu must be positive");
}

std::vector<RelevanceSample> synth_corpus(const SynthSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  const auto n_hall = static_cast<std::size_t>(std::llround(static_cast<double>(spec.n_samples) * spec.hallucination_rate));
  std::vector<bool> labels(spec.n_samples, false);
  std::fill(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(n_hall), true);
  std::shuffle(labels.begin(), labels.end(), rng);

  std::vector<RelevanceSample> samples;
  samples.reserve(spec.n_samples);
  std::normal_distribution<double> noise(0.0, spec.sigma);
  for (std::size_t i = 0; i < spec.n_samples; ++i) {
    const double centre = labels[i] ? spec.mu - spec.delta : spec.mu;
    Matrix m(spec.rows, spec.cols);
    for (auto& v : m.values()) v = std::max(0.0, centre + noise(rng));
    char id[32];
    std::snprintf(id, sizeof(id), "synth-%05zu", i);
    samples.push_back({id, std::move(m), labels[i]});
  }
  return samples;
}

// --- relevance extraction --------------------------------------------------

Matrix record_relevance(const CorpusRecord& record, const TransformerParams& params, const RelevanceOptions& options,
                        TokenSequence* response_out) {
  const auto prompt = assemble_prompt(prompt_parts(record, params.config.vocab_size));
  Generation gen;
  std::vector<TokenId> targets;
  if (record.response) {
    const auto forced = tokenize_words(*record.response, params.config.vocab_size);
    if (forced.empty()) fail(ErrorKind::kShape, "response has no tokens");
    gen = teacher_forced(prompt.tokens, forced, params);
    targets = forced;
  } else {
    gen = greedy_decode(prompt.tokens, params, options.max_new, options.stop_token);
  }
  if (response_out) *response_out = gen.response;
  return build_relevance_matrix(gen.traces, prompt.tokens.size(), targets, options.lrp);
}

RelevanceRun run_relevance(const std::vector<CorpusRecord>& corpus, const TransformerParams& params,
                           const fs::path& out_dir, const RelevanceOptions& options) {
  params.validate();
  fs::create_directories(out_dir);

  struct Slot {
    std::optional<ManifestEntry> entry;
    std::optional<std::string> error;
  };
  std::vector<Slot> slots(corpus.size());
  std::atomic<std::size_t> next{0};
  const auto work = [&] {
    for (std::size_t i = next++; i < corpus.size(); i = next++) {
      const auto& rec = corpus[i];
      try {
        const Matrix r = record_relevance(rec, params, options);
        ManifestEntry e{rec.id, sample_file_name(i, rec.id), rec.label, r.rows(), r.cols()};
        export_matrix(r, out_dir / e.file);
        slots[i].entry = std::move(e);
      } catch (const std::exception& ex) {
        slots[i].error = ex.what();
      }
    }
  };
  const std::size_t jobs = std::clamp<std::size_t>(options.jobs, 1, std::max<std::size_t>(1, corpus.size()));
  std::vector<std::thread> pool;
  for (std::size_t j = 1; j < jobs; ++j) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();

  RelevanceRun run;
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (slots[i].entry) run.manifest.push_back(std::move(*slots[i].entry));
    if (slots[i].error) run.failures.push_back({corpus[i].id, std::move(*slots[i].error)});
  }
  write_manifest(run.manifest, out_dir / kManifestName);
  const fs::path log = out_dir / "failures.log";
  if (!run.failures.empty()) {
    std::ofstream out(log, std::ios::trunc);
    for (const auto& f : run.failures) out << f.id << '\t' << f.message << '\n';
  } else {
    std::error_code ec;
    fs::remove(log, ec);
  }
  return run;
}

// --- features --------------------------------------------------------------

const char* feature_name(FeatureSource source) {
  switch (source) {
    case FeatureSource::kPrompt: return "prompt";
    case FeatureSource::kResponse: return "response";
    case FeatureSource::kConcat: return "concat";
  }
  return "?";
}

FeatureSource parse_feature(const std::string& name) {
  if (name == "prompt") return FeatureSource::kPrompt;
  if (name == "response") return FeatureSource::kResponse;
  if (name == "concat") return FeatureSource::kConcat;
  fail(ErrorKind::kConfig, "unknown feature \"" + name + "\" (prompt|response|concat)");
}

RelevanceProfile make_profile(const Matrix& r_star) {
  return {prompt_relevance(r_star), response_relevance(r_star)};
}

double mean_score(const RelevanceProfile& p, FeatureSource source) {
  switch (source) {
    case FeatureSource::kPrompt:
      if (p.r_prompt.empty()) fail(ErrorKind::kShape, "profile has no prompt vector");
      return mean(p.r_prompt);
    case FeatureSource::kResponse:
      if (p.r_response.empty()) fail(ErrorKind::kShape, "profile has no response vector");
      return mean(p.r_response);
    case FeatureSource::kConcat: {
      std::vector<double> all = p.r_prompt;
      all.insert(all.end(), p.r_response.begin(), p.r_response.end());
      if (all.empty()) fail(ErrorKind::kShape, "empty profile");
      return mean(all);
    }
  }
  return 0.0;
}

namespace {

void check_nonempty(const std::vector<RelevanceSample>& samples) {
  if (samples.empty()) fail(ErrorKind::kSize, "dataset is empty");
  for (const auto& s : samples) {
    if (s.r_star.empty()) fail(ErrorKind::kShape, "sample " + s.id + " has an empty relevance matrix");
  }
}

void normalize_pooled(std::vector<std::vector<double>*> vectors) {
  std::vector<double> pooled;
  for (const auto* v : vectors) pooled.insert(pooled.end(), v->begin(), v->end());
  const auto norm = ClipNormalizer::fit(pooled);
  for (auto* v : vectors) *v = norm.apply(*v);
}

}  // namespace

std::vector<RelevanceProfile> normalized_profiles(const std::vector<RelevanceSample>& samples, std::size_t l_new) {
  check_nonempty(samples);
  if (l_new == 0) fail(ErrorKind::kConfig, "l_new must be >= 1");
  std::vector<RelevanceProfile> profiles;
  profiles.reserve(samples.size());
  for (const auto& s : samples) {
    const auto raw = make_profile(s.r_star);
    profiles.push_back({resample_1d(raw.r_prompt, l_new), resample_1d(raw.r_response, l_new)});
  }
  std::vector<std::vector<double>*> prompts, responses;
  for (auto& p : profiles) {
    prompts.push_back(&p.r_prompt);
    responses.push_back(&p.r_response);
  }
  normalize_pooled(prompts);
  normalize_pooled(responses);
  return profiles;
}

Matrix vector_features(const std::vector<RelevanceProfile>& profiles, FeatureSource source) {
  if (profiles.empty()) fail(ErrorKind::kSize, "no profiles");
  std::vector<double> data;
  std::size_t width = 0;
  for (const auto& p : profiles) {
    const std::size_t before = data.size();
    if (source != FeatureSource::kResponse) data.insert(data.end(), p.r_prompt.begin(), p.r_prompt.end());
    if (source != FeatureSource::kPrompt) data.insert(data.end(), p.r_response.begin(), p.r_response.end());
    const std::size_t w = data.size() - before;
    if (before == 0) width = w;
    if (w != width) fail(ErrorKind::kShape, "mixed feature shapes");
  }
  if (width == 0) fail(ErrorKind::kShape, "empty feature vectors");
  return Matrix(profiles.size(), width, std::move(data));
}

std::vector<double> mean_scores(const std::vector<RelevanceProfile>& profiles, FeatureSource source) {
  std::vector<double> out;
  out.reserve(profiles.size());
  for (const auto& p : profiles) out.push_back(mean_score(p, source));
  return out;
}

std::vector<Matrix> sequence_features(const std::vector<RelevanceSample>& samples, std::size_t t_fix,
                                      std::size_t p_fix) {
  check_nonempty(samples);
  if (t_fix == 0 || p_fix == 0) fail(ErrorKind::kConfig, "sequence shape must be positive");
  std::vector<Matrix> seqs;
  seqs.reserve(samples.size());
  std::vector<double> pooled;
  for (const auto& s : samples) {
    seqs.push_back(resample_2d(s.r_star, t_fix, p_fix));
    const auto v = seqs.back().values();
    pooled.insert(pooled.end(), v.begin(), v.end());
  }
  const auto norm = ClipNormalizer::fit(pooled);
  for (auto& m : seqs) {
    for (auto& v : m.values()) v = norm(v);
  }
  return seqs;
}

std::vector<bool> require_labels(const std::vector<RelevanceSample>& samples) {
  std::vector<bool> labels;
  labels.reserve(samples.size());
  for (const auto& s : samples) {
    if (!s.label) fail(ErrorKind::kFormat, "sample " + s.id + " has no label");
    labels.push_back(*s.label);
  }
  return labels;
}

// --- detection -------------------------------------------------------------

const char* method_name(DetectMethod method) {
  switch (method) {
    case DetectMethod::kThreshold: return "threshold";
    case DetectMethod::kSvm: return "svm";
    case DetectMethod::kMlp: return "mlp";
    case DetectMethod::kLstm: return "lstm";
  }
  return "?";
}

DetectMethod parse_method(const std::string& name) {
  if (name == "threshold") return DetectMethod::kThreshold;
  if (name == "svm") return DetectMethod::kSvm;
  if (name == "mlp") return DetectMethod::kMlp;
  if (name == "lstm") return DetectMethod::kLstm;
  fail(ErrorKind::kConfig, "unknown method \"" + name + "\" (threshold|svm|mlp|lstm)");
}

namespace {

// Everything the trainers consume, computed once per dataset.
struct Inputs {
  std::vector<bool> labels;
  std::vector<double> scores;  // threshold
  Matrix features;             // svm, mlp
  std::vector<Matrix> sequences;  // lstm
};

Inputs prepare(const std::vector<RelevanceSample>& samples, const DetectOptions& o) {
  Inputs in;
  in.labels = require_labels(samples);
  if (o.method == DetectMethod::kLstm) {
    in.sequences = sequence_features(samples, o.t_fix, o.p_fix);
  } else {
    const auto profiles = normalized_profiles(samples, o.l_new);
    if (o.method == DetectMethod::kThreshold) {
      in.scores = mean_scores(profiles, o.feature);
    } else {
      in.features = vector_features(profiles, o.feature);
    }
  }
  return in;
}

template <class T>
std::vector<T> pick(const std::vector<T>& v, std::span<const std::size_t> idx) {
  std::vector<T> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(v[i]);
  return out;
}

Matrix pick_rows(const Matrix& m, std::span<const std::size_t> idx) {
  Matrix out(idx.size(), m.cols());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    const auto src = m.row(idx[r]);
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  return out;
}

ClassifierModel fit(const Inputs& in, std::span<const std::size_t> idx, const DetectOptions& o) {
  const auto labels = pick(in.labels, idx);
  switch (o.method) {
    case DetectMethod::kThreshold:
      return ThresholdModel{best_threshold(pick(in.scores, idx), labels, o.grid)};
    case DetectMethod::kSvm: {
      auto opts = o.svm;
      opts.seed = o.seed;
      return train_svm_rbf(pick_rows(in.features, idx), labels, opts);
    }
    case DetectMethod::kMlp: {
      auto opts = o.mlp;
      opts.seed = o.seed;
      return train_mlp(pick_rows(in.features, idx), labels, opts);
    }
    case DetectMethod::kLstm: {
      auto opts = o.lstm;
      opts.seed = o.seed;
      const auto seqs = pick(in.sequences, idx);
      return train_lstm(seqs, labels, opts);
    }
  }
  fail(ErrorKind::kConfig, "unknown method");
}

bool predict(const ClassifierModel& model, const Inputs& in, std::size_t i) {
  return std::visit(
      [&](const auto& m) -> bool {
        using M = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<M, ThresholdModel>) {
          return threshold_classify(in.scores[i], m.threshold);
        } else if constexpr (std::is_same_v<M, LstmModel>) {
          return m.predict(in.sequences[i]);
        } else {
          return m.predict(in.features.row(i));
        }
      },
      model);
}

void write_metrics_row(std::ostringstream& out, const std::string& name, std::size_t n, const ClassifierMetrics& m) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%s,%zu,%.6f,%.6f,%.6f,%.6f,%zu,%zu,%zu,%zu\n", name.c_str(), n, m.accuracy,
                m.precision, m.recall, m.f1, m.tp, m.fp, m.tn, m.fn);
  out << buf;
}

}  // namespace

DetectReport run_detect(const std::vector<RelevanceSample>& samples, const DetectOptions& options) {
  const Inputs in = prepare(samples, options);
  DetectReport report{options.method, options.feature, samples.size(), {}};
  report.cv = kfold_cv(in.labels, options.k, options.seed,
                       [&](std::span<const std::size_t> train, std::span<const std::size_t> test) {
                         const auto model = fit(in, train, options);
                         std::vector<bool> preds;
                         preds.reserve(test.size());
                         for (auto i : test) preds.push_back(predict(model, in, i));
                         return preds;
                       });
  return report;
}

ClassifierModel fit_detector(const std::vector<RelevanceSample>& samples, const DetectOptions& options) {
  const Inputs in = prepare(samples, options);
  std::vector<std::size_t> all(samples.size());
  std::iota(all.begin(), all.end(), 0);
  return fit(in, all, options);
}

std::string detect_csv(const DetectReport& report) {
  std::ostringstream out;
  out << "fold,n,accuracy,precision,recall,f1,tp,fp,tn,fn\n";
  for (std::size_t f = 0; f < report.cv.folds.size(); ++f) {
    const auto& fold = report.cv.folds[f];
    write_metrics_row(out, std::to_string(f + 1), fold.test_indices.size(), fold.metrics);
  }
  write_metrics_row(out, "pooled", report.cv.pooled.total(), report.cv.pooled);
  return out.str();
}

std::string detect_text(const DetectReport& report) {
  std::ostringstream out;
  out << "method " << method_name(report.method) << ", feature " << feature_name(report.feature) << ", "
      << report.n_samples << " samples, " << report.cv.folds.size() << "-fold cross-validation\n";
  const auto line = [&](const std::string& name, const ClassifierMetrics& m) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%-8s acc %8s  prec %8s  rec %8s  f1 %8s  (tp %zu fp %zu tn %zu fn %zu)\n",
                  name.c_str(), format_percent(m.accuracy).c_str(), format_percent(m.precision).c_str(),
                  format_percent(m.recall).c_str(), format_percent(m.f1).c_str(), m.tp, m.fp, m.tn, m.fn);
    out << buf;
  };
  for (std::size_t f = 0; f < report.cv.folds.size(); ++f) line("fold " + std::to_string(f + 1), report.cv.folds[f].metrics);
  line("pooled", report.cv.pooled);
  return out.str();
}

// --- sweep and U test ------------------------------------------------------

SweepReport run_sweep(const std::vector<RelevanceSample>& samples, FeatureSource source, std::size_t l_new,
                      const ThresholdGrid& grid) {
  const auto labels = require_labels(samples);
  const auto scores = mean_scores(normalized_profiles(samples, l_new), source);
  SweepReport report;
  report.rows = threshold_sweep(scores, labels, grid);
  report.auc = sweep_auc(report.rows);
  return report;
}

std::string sweep_csv(const SweepReport& report) {
  std::ostringstream out;
  out << "threshold,accuracy,precision,recall,f1,tp,fp,tn,fn\n";
  for (const auto& r : report.rows) {
    char buf[256];
    const auto& m = r.metrics;
    std::snprintf(buf, sizeof(buf), "%.4f,%.6f,%.6f,%.6f,%.6f,%zu,%zu,%zu,%zu\n", r.threshold, m.accuracy, m.precision,
                  m.recall, m.f1, m.tp, m.fp, m.tn, m.fn);
    out << buf;
  }
  return out.str();
}

std::vector<UtestRow> run_utest(const std::vector<RelevanceSample>& samples, const UtestOptions& options) {
  const auto labels = require_labels(samples);
  const auto profiles = normalized_profiles(samples, options.l_new);
  std::vector<UtestRow> rows;
  for (const auto source : options.statistics) {
    const auto scores = mean_scores(profiles, source);
    std::vector<double> hall, normal;
    for (std::size_t i = 0; i < scores.size(); ++i) (labels[i] ? hall : normal).push_back(scores[i]);
    UtestRow row{source, 1.0, hall.size(), normal.size()};
    row.median_p = repeated_subsample_utest(hall, normal, options.n, options.iters, options.seed);
    rows.push_back(row);
  }
  return rows;
}

std::string utest_csv(const std::vector<UtestRow>& rows, const UtestOptions& options) {
  std::ostringstream out;
  out << "statistic,n,iters,median_p,n_hallucinated,n_normal\n";
  for (const auto& r : rows) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%s,%zu,%zu,%.6g,%zu,%zu\n", feature_name(r.statistic), options.n, options.iters,
                  r.median_p, r.n_hallucinated, r.n_normal);
    out << buf;
  }
  return out.str();
}

}  // namespace lrp4rag

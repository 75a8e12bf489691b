#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "core/corpus.hpp"
#include "core/lrp.hpp"
#include "core/lstm.hpp"
#include "core/metrics.hpp"
#include "core/mlp.hpp"
#include "core/model_io.hpp"
#include "core/numerics.hpp"
#include "core/svm.hpp"
#include "core/transformer.hpp"

namespace lrp4rag {

// A relevance matrix R* (response x prompt) with its sample id and label.
struct RelevanceSample {
  std::string id;
  Matrix r_star;
  std::optional<bool> label;  // true = hallucinated
};

// manifest.jsonl line: {"id", "file", "label", "rows", "cols"}; `file` is
// relative to the manifest's directory.
struct ManifestEntry {
  std::string id;
  std::string file;
  std::optional<bool> label;
  std::size_t rows = 0;
  std::size_t cols = 0;
};

inline constexpr const char* kManifestName = "manifest.jsonl";

void write_manifest(const std::vector<ManifestEntry>& entries, const std::filesystem::path& path);
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);

// Writes one LRPM file per sample plus manifest.jsonl into `dir`.
std::vector<ManifestEntry> write_dataset(const std::vector<RelevanceSample>& samples, const std::filesystem::path& dir);
// Accepts a manifest path or the directory holding manifest.jsonl.
std::vector<RelevanceSample> load_dataset(const std::filesystem::path& manifest_or_dir);

// "007_some-id.lrpm": index prefix keeps names unique, id is sanitized.
std::string sample_file_name(std::size_t index, const std::string& id);

struct SynthSpec {
  std::size_t n_samples = 500;
  double hallucination_rate = 0.5;
  double delta = 0.75;  // mean gap between normal and hallucinated cells
  std::size_t rows = 16;
  std::size_t cols = 48;
  double mu = 1.0;
  double sigma = 0.25;
  std::uint64_t seed = 0;

  void validate() const;
};

// Exactly round(n * rate) hallucinated samples at shuffled positions. Normal
// cells ~ N(mu, sigma^2), hallucinated ~ N(mu - delta, sigma^2), clipped at 0.
std::vector<RelevanceSample> synth_corpus(const SynthSpec& spec);

struct RelevanceOptions {
  std::size_t max_new = 16;  // greedy decoding budget when a record has no response
  TokenId stop_token = 0;
  std::size_t jobs = 1;
  LrpOptions lrp;
};

// R* for one record. A given response is teacher-forced; otherwise greedy.
Matrix record_relevance(const CorpusRecord& record, const TransformerParams& params, const RelevanceOptions& options,
                        TokenSequence* response_out = nullptr);

struct SampleFailure {
  std::string id;
  std::string message;
};

struct RelevanceRun {
  std::vector<ManifestEntry> manifest;  // successful samples, corpus order
  std::vector<SampleFailure> failures;
};

// Per-record failures are collected, the rest complete. Writes matrices,
// manifest.jsonl and, when anything failed, failures.log into `out_dir`.
RelevanceRun run_relevance(const std::vector<CorpusRecord>& corpus, const TransformerParams& params,
                           const std::filesystem::path& out_dir, const RelevanceOptions& options = {});

enum class FeatureSource { kPrompt, kResponse, kConcat };

const char* feature_name(FeatureSource source);
FeatureSource parse_feature(const std::string& name);

struct RelevanceProfile {
  std::vector<double> r_prompt;
  std::vector<double> r_response;
};

RelevanceProfile make_profile(const Matrix& r_star);

// Mean of the selected vector (already resampled and normalized). kConcat
// averages over both vectors.
double mean_score(const RelevanceProfile& profile, FeatureSource source);

// Profiles resampled to `l_new`, each vector kind clip-normalized with one
// normalizer fitted over the whole dataset so per-sample levels survive.
std::vector<RelevanceProfile> normalized_profiles(const std::vector<RelevanceSample>& samples, std::size_t l_new);

// One row per sample: the selected normalized vector(s).
Matrix vector_features(const std::vector<RelevanceProfile>& profiles, FeatureSource source);
std::vector<double> mean_scores(const std::vector<RelevanceProfile>& profiles, FeatureSource source);

// R* resampled to (t_fix x p_fix), cells clip-normalized with a pooled normalizer.
std::vector<Matrix> sequence_features(const std::vector<RelevanceSample>& samples, std::size_t t_fix,
                                      std::size_t p_fix);

std::vector<bool> require_labels(const std::vector<RelevanceSample>& samples);

enum class DetectMethod { kThreshold, kSvm, kMlp, kLstm };

const char* method_name(DetectMethod method);
DetectMethod parse_method(const std::string& name);

struct DetectOptions {
  DetectMethod method = DetectMethod::kSvm;
  FeatureSource feature = FeatureSource::kResponse;
  std::size_t l_new = 220;
  std::size_t k = 5;
  std::uint64_t seed = 0;  // fold assignment and every trainer
  ThresholdGrid grid;
  SvmOptions svm;
  MlpOptions mlp;
  LstmOptions lstm;
  std::size_t t_fix = 32;
  std::size_t p_fix = 64;
};

struct DetectReport {
  DetectMethod method;
  FeatureSource feature;
  std::size_t n_samples = 0;
  CvResult cv;
};

DetectReport run_detect(const std::vector<RelevanceSample>& samples, const DetectOptions& options);

// Fits one model on every sample (for --save-model).
ClassifierModel fit_detector(const std::vector<RelevanceSample>& samples, const DetectOptions& options);

// Header: fold,n,accuracy,precision,recall,f1,tp,fp,tn,fn  (last row fold=pooled)
std::string detect_csv(const DetectReport& report);
std::string detect_text(const DetectReport& report);

struct SweepReport {
  std::vector<SweepRow> rows;
  double auc = 0.0;
};

SweepReport run_sweep(const std::vector<RelevanceSample>& samples, FeatureSource source, std::size_t l_new,
                      const ThresholdGrid& grid = {});

// Header: threshold,accuracy,precision,recall,f1,tp,fp,tn,fn
std::string sweep_csv(const SweepReport& report);

struct UtestOptions {
  std::size_t n = 200;
  std::size_t iters = 200;
  std::uint64_t seed = 0;
  std::size_t l_new = 100;
  std::vector<FeatureSource> statistics{FeatureSource::kPrompt, FeatureSource::kResponse};
};

struct UtestRow {
  FeatureSource statistic;
  double median_p = 1.0;
  std::size_t n_hallucinated = 0;
  std::size_t n_normal = 0;
};

std::vector<UtestRow> run_utest(const std::vector<RelevanceSample>& samples, const UtestOptions& options);

// Header: statistic,n,iters,median_p,n_hallucinated,n_normal
std::string utest_csv(const std::vector<UtestRow>& rows, const UtestOptions& options);

}  // namespace lrp4rag

#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace lrp4rag {

// Positive class = hallucinated.
struct ClassifierMetrics {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;

  std::size_t total() const { return tp + fp + tn + fn; }
};

ClassifierMetrics compute_metrics(const std::vector<bool>& preds, const std::vector<bool>& labels);

// "69.16%"
std::string format_percent(double fraction);

// Low relevance flags a hallucination.
inline bool threshold_classify(double score, double threshold) { return score <= threshold; }

struct ThresholdGrid {
  double start = 0.0;
  double stop = 1.0;
  double step = 0.01;

  std::vector<double> values() const;
};

struct SweepRow {
  double threshold;
  ClassifierMetrics metrics;
};

std::vector<SweepRow> threshold_sweep(std::span<const double> scores, const std::vector<bool>& labels,
                                      const ThresholdGrid& grid);

// Trapezoidal ROC area over the sweep's (FPR, TPR) points plus (0,0) and (1,1).
double sweep_auc(const std::vector<SweepRow>& rows);

enum class ThresholdObjective { kAccuracy, kF1 };

// Grid threshold maximizing the objective on the given data; the first one wins ties.
double best_threshold(std::span<const double> scores, const std::vector<bool>& labels, const ThresholdGrid& grid,
                      ThresholdObjective objective = ThresholdObjective::kAccuracy);

// Seeded shuffle into k disjoint folds whose sizes differ by at most one.
std::vector<std::vector<std::size_t>> kfold_partition(std::size_t n, std::size_t k, std::uint64_t seed);

// Trains on `train` and returns one prediction per index in `test`.
using FitPredict =
    std::function<std::vector<bool>(std::span<const std::size_t> train, std::span<const std::size_t> test)>;

struct FoldResult {
  std::vector<std::size_t> test_indices;
  std::vector<bool> predictions;
  ClassifierMetrics metrics;
};

struct CvResult {
  std::vector<FoldResult> folds;
  ClassifierMetrics pooled;  // over all held-out predictions
};

CvResult kfold_cv(const std::vector<bool>& labels, std::size_t k, std::uint64_t seed, const FitPredict& fit_predict);

}  // namespace lrp4rag

#include "core/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>

#include "core/error.hpp"

namespace lrp4rag {

ClassifierMetrics compute_metrics(const std::vector<bool>& preds, const std::vector<bool>& labels) {
  if (preds.size() != labels.size()) fail(ErrorKind::kShape, "predictions and labels differ in length");
  if (preds.empty()) fail(ErrorKind::kShape, "no predictions");
  ClassifierMetrics m;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i]) {
      labels[i] ? ++m.tp : ++m.fp;
    } else {
      labels[i] ? ++m.fn : ++m.tn;
    }
  }
  const auto ratio = [](std::size_t num, std::size_t den) {
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
  };
  m.accuracy = ratio(m.tp + m.tn, m.total());
  m.precision = ratio(m.tp, m.tp + m.fp);
  m.recall = ratio(m.tp, m.tp + m.fn);
  const double pr = m.precision + m.recall;
  m.f1 = pr > 0.0 ? 2.0 * m.precision * m.recall / pr : 0.0;
  return m;
}

std::string format_percent(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f%%", fraction * 100.0);
  return buf;
}

std::vector<double> ThresholdGrid::values() const {
  if (!(step > 0.0) || !(stop >= start)) fail(ErrorKind::kConfig, "threshold grid needs step > 0 and stop >= start");
  std::vector<double> out;
  const auto count = static_cast<std::size_t>(std::floor((stop - start) / step + 1e-9)) + 1;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    // Round to 1e-12 so 0.1 + 0.2 style drift does not leak into reports.
    out.push_back(std::round((start + static_cast<double>(i) * step) * 1e12) / 1e12);
  }
  return out;
}

std::vector<SweepRow> threshold_sweep(std::span<const double> scores, const std::vector<bool>& labels,
                                      const ThresholdGrid& grid) {
  if (scores.size() != labels.size()) fail(ErrorKind::kShape, "scores and labels differ in length");
  std::vector<SweepRow> rows;
  std::vector<bool> preds(scores.size());
  for (double t : grid.values()) {
    for (std::size_t i = 0; i < scores.size(); ++i) preds[i] = threshold_classify(scores[i], t);
    rows.push_back({t, compute_metrics(preds, labels)});
  }
  return rows;
}

double sweep_auc(const std::vector<SweepRow>& rows) {
  std::vector<std::pair<double, double>> pts{{0.0, 0.0}, {1.0, 1.0}};
  for (const auto& row : rows) {
    const auto& m = row.metrics;
    const double fpr = m.fp + m.tn == 0 ? 0.0 : static_cast<double>(m.fp) / static_cast<double>(m.fp + m.tn);
    pts.emplace_back(fpr, m.recall);
  }
  std::sort(pts.begin(), pts.end());
  double area = 0.0;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    area += (pts[i].first - pts[i - 1].first) * (pts[i].second + pts[i - 1].second) / 2.0;
  }
  return area;
}

double best_threshold(std::span<const double> scores, const std::vector<bool>& labels, const ThresholdGrid& grid,
                      ThresholdObjective objective) {
  const auto rows = threshold_sweep(scores, labels, grid);
  const auto value = [objective](const SweepRow& r) {
    return objective == ThresholdObjective::kF1 ? r.metrics.f1 : r.metrics.accuracy;
  };
  const auto best = std::max_element(rows.begin(), rows.end(),
                                     [&](const SweepRow& a, const SweepRow& b) { return value(a) < value(b); });
  return best->threshold;
}

std::vector<std::vector<std::size_t>> kfold_partition(std::size_t n, std::size_t k, std::uint64_t seed) {
  if (k < 2) fail(ErrorKind::kConfig, "k-fold cross-validation needs k >= 2");
  if (n < k) fail(ErrorKind::kSize, "fewer samples (" + std::to_string(n) + ") than folds (" + std::to_string(k) + ")");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> folds(k);
  for (std::size_t i = 0; i < n; ++i) folds[i % k].push_back(order[i]);
  for (auto& f : folds) std::sort(f.begin(), f.end());
  return folds;
}

CvResult kfold_cv(const std::vector<bool>& labels, std::size_t k, std::uint64_t seed, const FitPredict& fit_predict) {
  const auto folds = kfold_partition(labels.size(), k, seed);
  CvResult result;
  std::vector<bool> pooled_preds;
  std::vector<bool> pooled_labels;
  for (std::size_t f = 0; f < folds.size(); ++f) {
    std::vector<std::size_t> train;
    for (std::size_t g = 0; g < folds.size(); ++g) {
      if (g != f) train.insert(train.end(), folds[g].begin(), folds[g].end());
    }
    std::sort(train.begin(), train.end());
    FoldResult fold;
    fold.test_indices = folds[f];
    fold.predictions = fit_predict(train, fold.test_indices);
    if (fold.predictions.size() != fold.test_indices.size()) {
      fail(ErrorKind::kShape, "trainer returned the wrong number of predictions");
    }
    std::vector<bool> fold_labels;
    for (auto idx : fold.test_indices) fold_labels.push_back(labels[idx]);
    fold.metrics = compute_metrics(fold.predictions, fold_labels);
    pooled_preds.insert(pooled_preds.end(), fold.predictions.begin(), fold.predictions.end());
    pooled_labels.insert(pooled_labels.end(), fold_labels.begin(), fold_labels.end());
    result.folds.push_back(std::move(fold));
  }
  result.pooled = compute_metrics(pooled_preds, pooled_labels);
  return result;
}

}  // namespace lrp4rag

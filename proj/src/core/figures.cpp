#include "core/figures.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "core/error.hpp"
#include "core/stats.hpp"

namespace lrp4rag {

const char* figure_name(FigureKind kind) {
  switch (kind) {
    case FigureKind::kBox: return "box";
    case FigureKind::kLine: return "line";
    case FigureKind::kHeatmap: return "heatmap";
  }
  return "?";
}

FigureKind parse_figure(const std::string& name) {
  if (name == "box") return FigureKind::kBox;
  if (name == "line") return FigureKind::kLine;
  if (name == "heatmap") return FigureKind::kHeatmap;
  fail(ErrorKind::kConfig, "unknown figure \"" + name + "\" (box|line|heatmap)");
}

namespace {

double quantile_sorted(const std::vector<double>& v, double q) {
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(pos);
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

const char* class_name(bool hallucinated) { return hallucinated ? "hallucinated" : "normal"; }

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

std::string box_csv(const std::vector<RelevanceSample>& samples, const std::vector<bool>& labels,
                    const FigureOptions& o) {
  const auto profiles = normalized_profiles(samples, o.l_new);
  std::ostringstream out;
  out << "statistic,class,n,min,q1,median,q3,max,whisker_low,whisker_high,outliers\n";
  for (const auto source : {FeatureSource::kPrompt, FeatureSource::kResponse}) {
    const auto scores = mean_scores(profiles, source);
    for (const bool cls : {false, true}) {
      std::vector<double> group;
      for (std::size_t i = 0; i < scores.size(); ++i) {
        if (labels[i] == cls) group.push_back(scores[i]);
      }
      if (group.empty()) continue;
      const auto b = box_stats(group);
      out << feature_name(source) << ',' << class_name(cls) << ',' << b.n << ',' << num(b.min) << ',' << num(b.q1)
          << ',' << num(b.median) << ',' << num(b.q3) << ',' << num(b.max) << ',' << num(b.whisker_low) << ','
          << num(b.whisker_high) << ',';
      for (std::size_t k = 0; k < b.outliers.size(); ++k) out << (k ? ";" : "") << num(b.outliers[k]);
      out << '\n';
    }
  }
  return out.str();
}

// Per-class mean curves of the raw resampled profiles, both curves normalized
// together so they stay comparable.
std::string line_csv(const std::vector<RelevanceSample>& samples, const std::vector<bool>& labels,
                     const FigureOptions& o) {
  std::ostringstream out;
  out << "statistic,class,position,value\n";
  for (const auto source : {FeatureSource::kPrompt, FeatureSource::kResponse}) {
    std::vector<double> sums[2] = {std::vector<double>(o.l_new, 0.0), std::vector<double>(o.l_new, 0.0)};
    std::size_t counts[2] = {0, 0};
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const auto p = make_profile(samples[i].r_star);
      const auto v = resample_1d(source == FeatureSource::kPrompt ? p.r_prompt : p.r_response, o.l_new);
      auto& s = sums[labels[i] ? 1 : 0];
      for (std::size_t k = 0; k < o.l_new; ++k) s[k] += v[k];
      ++counts[labels[i] ? 1 : 0];
    }
    std::vector<double> pooled;
    for (int c = 0; c < 2; ++c) {
      if (!counts[c]) continue;
      for (auto& x : sums[c]) x /= static_cast<double>(counts[c]);
      pooled.insert(pooled.end(), sums[c].begin(), sums[c].end());
    }
    const auto norm = ClipNormalizer::fit(pooled, 0.0, 100.0);
    for (int c = 0; c < 2; ++c) {
      if (!counts[c]) continue;
      for (std::size_t k = 0; k < o.l_new; ++k) {
        out << feature_name(source) << ',' << class_name(c == 1) << ',' << k << ',' << num(norm(sums[c][k])) << '\n';
      }
    }
  }
  return out.str();
}

std::string heatmap_csv(const std::vector<RelevanceSample>& samples, const std::vector<bool>& labels,
                        const FigureOptions& o) {
  const auto seqs = sequence_features(samples, o.heat_rows, o.heat_cols);
  Matrix sums[2] = {Matrix(o.heat_rows, o.heat_cols), Matrix(o.heat_rows, o.heat_cols)};
  std::size_t counts[2] = {0, 0};
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    add_into(sums[labels[i] ? 1 : 0], seqs[i]);
    ++counts[labels[i] ? 1 : 0];
  }
  std::ostringstream out;
  out << "class,row,col,value\n";
  for (int c = 0; c < 2; ++c) {
    if (!counts[c]) continue;
    for (std::size_t r = 0; r < o.heat_rows; ++r) {
      for (std::size_t k = 0; k < o.heat_cols; ++k) {
        out << class_name(c == 1) << ',' << r << ',' << k << ','
            << num(sums[c](r, k) / static_cast<double>(counts[c])) << '\n';
      }
    }
  }
  return out.str();
}

}  // namespace

BoxStats box_stats(std::vector<double> values) {
  if (values.empty()) fail(ErrorKind::kSize, "box statistics need at least one value");
  std::sort(values.begin(), values.end());
  BoxStats b;
  b.n = values.size();
  b.min = values.front();
  b.max = values.back();
  b.q1 = quantile_sorted(values, 0.25);
  b.median = quantile_sorted(values, 0.5);
  b.q3 = quantile_sorted(values, 0.75);
  const double iqr = b.q3 - b.q1;
  const double lo_fence = b.q1 - 1.5 * iqr;
  const double hi_fence = b.q3 + 1.5 * iqr;
  b.whisker_low = b.max;
  b.whisker_high = b.min;
  for (double v : values) {
    if (v < lo_fence || v > hi_fence) {
      b.outliers.push_back(v);
    } else {
      b.whisker_low = std::min(b.whisker_low, v);
      b.whisker_high = std::max(b.whisker_high, v);
    }
  }
  return b;
}

std::string figure_csv(FigureKind kind, const std::vector<RelevanceSample>& samples, const FigureOptions& options) {
  const auto labels = require_labels(samples);
  switch (kind) {
    case FigureKind::kBox: return box_csv(samples, labels, options);
    case FigureKind::kLine: return line_csv(samples, labels, options);
    case FigureKind::kHeatmap: return heatmap_csv(samples, labels, options);
  }
  return {};
}

void emit_figure_csv(FigureKind kind, const std::vector<RelevanceSample>& samples, const std::filesystem::path& path,
                     const FigureOptions& options) {
  const auto text = figure_csv(kind, samples, options);
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorKind::kIo, "cannot open " + path.string() + " for writing");
  out << text;
  if (!out) fail(ErrorKind::kIo, "short write to " + path.string());
}

}  // namespace lrp4rag

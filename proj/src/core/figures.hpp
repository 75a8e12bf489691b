#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "core/pipeline.hpp"

namespace lrp4rag {

enum class FigureKind { kBox, kLine, kHeatmap };

const char* figure_name(FigureKind kind);
FigureKind parse_figure(const std::string& name);

// Linear-interpolated quartiles, 1.5 IQR whiskers clamped to the data.
struct BoxStats {
  std::size_t n = 0;
  double min = 0, q1 = 0, median = 0, q3 = 0, max = 0;
  double whisker_low = 0, whisker_high = 0;
  std::vector<double> outliers;
};

BoxStats box_stats(std::vector<double> values);

struct FigureOptions {
  std::size_t l_new = 100;
  std::size_t heat_rows = 32;
  std::size_t heat_cols = 64;
};

// box:     statistic,class,n,min,q1,median,q3,max,whisker_low,whisker_high,outliers
// line:    statistic,class,position,value
// heatmap: class,row,col,value
std::string figure_csv(FigureKind kind, const std::vector<RelevanceSample>& samples, const FigureOptions& options = {});

void emit_figure_csv(FigureKind kind, const std::vector<RelevanceSample>& samples, const std::filesystem::path& path,
                     const FigureOptions& options = {});

}  // namespace lrp4rag

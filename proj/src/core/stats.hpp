#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "core/numerics.hpp"

namespace lrp4rag {

// Mean over the response axis for every prompt position.
std::vector<double> prompt_relevance(const Matrix& r_star);
// Mean over the prompt axis for every response position.
std::vector<double> response_relevance(const Matrix& r_star);

// Mean resampling to `new_len` with scaling factor rho = old/new.
// Shrinking (or equal) length: output i averages v[floor(i*rho), floor((i+1)*rho)).
// Growing length: output i averages v(floor(i*rho), floor((i+1)*rho)], reading
// past the end as the last value; an empty region copies v[floor(i*rho)].
std::vector<double> resample_1d(std::span<const double> v, std::size_t new_len);

// Rows to `new_cols` first, then columns to `new_rows`.
Matrix resample_2d(const Matrix& m, std::size_t new_rows, std::size_t new_cols);

// Nearest-rank percentile (pct in [0, 100]) of an unsorted sample.
double percentile_nearest_rank(std::span<const double> v, double pct);

// Winsorizes at the lo/hi percentiles and maps the clipped range to [0, 1].
// A degenerate range maps everything to 0.5.
class ClipNormalizer {
 public:
  ClipNormalizer() = default;
  ClipNormalizer(double lo, double hi) : lo_(lo), hi_(hi) {}

  static ClipNormalizer fit(std::span<const double> pooled, double lo_pct = 1.0, double hi_pct = 99.0);

  double operator()(double v) const;
  std::vector<double> apply(std::span<const double> v) const;

  double lo() const { return lo_; }
  double hi() const { return hi_; }

 private:
  double lo_ = 0.0;
  double hi_ = 1.0;
};

std::vector<double> clip_normalize(std::span<const double> v, double lo_pct = 1.0, double hi_pct = 99.0);

double mean(std::span<const double> v);
double median(std::vector<double> v);

enum class PValueMethod { kAuto, kExact, kNormal };

struct MannWhitneyResult {
  double u;        // U statistic of the first sample
  double p_value;  // two-sided
  bool exact;
};

// Midranks for ties. kAuto enumerates exactly when |a| + |b| <= 12, otherwise
// uses the tie- and continuity-corrected normal approximation.
MannWhitneyResult mann_whitney_u(std::span<const double> a, std::span<const double> b,
                                 PValueMethod method = PValueMethod::kAuto);

inline constexpr std::size_t kExactMannWhitneyLimit = 12;

// Median p-value of `iters` Mann-Whitney tests, each on `n` values drawn
// without replacement from both groups.
double repeated_subsample_utest(std::span<const double> group_a, std::span<const double> group_b, std::size_t n,
                                std::size_t iters, std::uint64_t seed);

}  // namespace lrp4rag

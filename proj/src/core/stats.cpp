#include "core/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "core/error.hpp"

namespace lrp4rag {

std::vector<double> prompt_relevance(const Matrix& r_star) {
  if (r_star.empty()) fail(ErrorKind::kShape, "empty relevance matrix");
  std::vector<double> out(r_star.cols(), 0.0);
  for (std::size_t t = 0; t < r_star.rows(); ++t)
    for (std::size_t i = 0; i < r_star.cols(); ++i) out[i] += r_star(t, i);
  for (double& v : out) v /= static_cast<double>(r_star.rows());
  return out;
}

std::vector<double> response_relevance(const Matrix& r_star) {
  if (r_star.empty()) fail(ErrorKind::kShape, "empty relevance matrix");
  std::vector<double> out(r_star.rows(), 0.0);
  for (std::size_t t = 0; t < r_star.rows(); ++t) out[t] = mean(r_star.row(t));
  return out;
}

std::vector<double> resample_1d(std::span<const double> v, std::size_t new_len) {
  if (v.empty()) fail(ErrorKind::kShape, "cannot resample an empty vector");
  if (new_len < 1) fail(ErrorKind::kConfig, "resample length must be >= 1");
  const std::size_t old_len = v.size();
  const bool growing = new_len > old_len;
  auto at = [&](std::size_t j) { return j < old_len ? v[j] : v[old_len - 1]; };
  std::vector<double> out(new_len);
  for (std::size_t i = 0; i < new_len; ++i) {
    // floor(i * old / new) in exact integer arithmetic
    const std::size_t start = i * old_len / new_len;
    const std::size_t end = (i + 1) * old_len / new_len;
    if (end == start) {
      out[i] = at(start);
      continue;
    }
    const std::size_t first = growing ? start + 1 : start;
    double sum = 0.0;
    for (std::size_t j = first; j < first + (end - start); ++j) sum += at(j);
    out[i] = sum / static_cast<double>(end - start);
  }
  return out;
}

Matrix resample_2d(const Matrix& m, std::size_t new_rows, std::size_t new_cols) {
  if (m.empty()) fail(ErrorKind::kShape, "cannot resample an empty matrix");
  Matrix wide(m.rows(), new_cols);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const auto row = resample_1d(m.row(r), new_cols);
    std::copy(row.begin(), row.end(), wide.row(r).begin());
  }
  Matrix out(new_rows, new_cols);
  std::vector<double> column(m.rows());
  for (std::size_t c = 0; c < new_cols; ++c) {
    for (std::size_t r = 0; r < m.rows(); ++r) column[r] = wide(r, c);
    const auto col = resample_1d(column, new_rows);
    for (std::size_t r = 0; r < new_rows; ++r) out(r, c) = col[r];
  }
  return out;
}

double percentile_nearest_rank(std::span<const double> v, double pct) {
  if (v.empty()) fail(ErrorKind::kShape, "percentile of empty sample");
  if (!(pct >= 0.0 && pct <= 100.0)) fail(ErrorKind::kConfig, "percentile must lie in [0, 100]");
  std::vector<double> sorted(v.begin(), v.end());
  std::sort(sorted.begin(), sorted.end());
  const double n = static_cast<double>(sorted.size());
  const auto rank = static_cast<std::size_t>(std::max(1.0, std::ceil(pct / 100.0 * n)));
  return sorted[std::min(rank, sorted.size()) - 1];
}

ClipNormalizer ClipNormalizer::fit(std::span<const double> pooled, double lo_pct, double hi_pct) {
  if (lo_pct > hi_pct) fail(ErrorKind::kConfig, "lower percentile above upper percentile");
  return ClipNormalizer(percentile_nearest_rank(pooled, lo_pct), percentile_nearest_rank(pooled, hi_pct));
}

double ClipNormalizer::operator()(double v) const {
  if (!(hi_ > lo_)) return 0.5;
  return (std::clamp(v, lo_, hi_) - lo_) / (hi_ - lo_);
}

std::vector<double> ClipNormalizer::apply(std::span<const double> v) const {
  std::vector<double> out(v.size());
  std::transform(v.begin(), v.end(), out.begin(), [this](double x) { return (*this)(x); });
  return out;
}

std::vector<double> clip_normalize(std::span<const double> v, double lo_pct, double hi_pct) {
  return ClipNormalizer::fit(v, lo_pct, hi_pct).apply(v);
}

double mean(std::span<const double> v) {
  if (v.empty()) fail(ErrorKind::kShape, "mean of empty vector");
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double median(std::vector<double> v) {
  if (v.empty()) fail(ErrorKind::kShape, "median of empty vector");
  std::sort(v.begin(), v.end());
  const std::size_t mid = v.size() / 2;
  return v.size() % 2 == 1 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
}

// ---------------------------------------------------------------------------

namespace {

struct Ranking {
  std::vector<double> ranks;  // pooled midranks, a first then b
  double tie_term = 0.0;      // sum over tie groups of t^3 - t
};

Ranking midranks(std::span<const double> a, std::span<const double> b) {
  const std::size_t n = a.size() + b.size();
  std::vector<double> pooled(a.begin(), a.end());
  pooled.insert(pooled.end(), b.begin(), b.end());
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return pooled[x] < pooled[y]; });
  Ranking out;
  out.ranks.resize(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && pooled[order[j + 1]] == pooled[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) out.ranks[order[k]] = rank;
    const double t = static_cast<double>(j - i + 1);
    out.tie_term += t * t * t - t;
    i = j + 1;
  }
  return out;
}

double exact_p(const std::vector<double>& ranks, std::size_t na, double u_obs) {
  const std::size_t n = ranks.size();
  const double nb = static_cast<double>(n - na);
  const double center = static_cast<double>(na) * nb / 2.0;
  const double offset = static_cast<double>(na) * static_cast<double>(na + 1) / 2.0;
  const double observed = std::abs(u_obs - center) - 1e-9;
  // Walk every size-na subset of the pooled ranks.
  std::vector<bool> pick(n, false);
  std::fill(pick.begin(), pick.begin() + static_cast<std::ptrdiff_t>(na), true);
  std::size_t extreme = 0;
  std::size_t total = 0;
  do {
    double rank_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      if (pick[i]) rank_sum += ranks[i];
    if (std::abs(rank_sum - offset - center) >= observed) ++extreme;
    ++total;
  } while (std::prev_permutation(pick.begin(), pick.end()));
  return static_cast<double>(extreme) / static_cast<double>(total);
}

double normal_p(std::size_t na, std::size_t nb, double u, double tie_term) {
  const double n1 = static_cast<double>(na);
  const double n2 = static_cast<double>(nb);
  const double n = n1 + n2;
  const double var = n1 * n2 / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
  if (!(var > 0.0)) return 1.0;
  const double z = std::max(0.0, std::abs(u - n1 * n2 / 2.0) - 0.5) / std::sqrt(var);
  return std::min(1.0, std::erfc(z / std::sqrt(2.0)));
}

}  // namespace

MannWhitneyResult mann_whitney_u(std::span<const double> a, std::span<const double> b, PValueMethod method) {
  if (a.empty() || b.empty()) fail(ErrorKind::kShape, "Mann-Whitney U needs two non-empty samples");
  const Ranking ranking = midranks(a, b);
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) rank_sum += ranking.ranks[i];
  const double na = static_cast<double>(a.size());
  const double u = rank_sum - na * (na + 1.0) / 2.0;

  bool use_exact = method == PValueMethod::kExact;
  if (method == PValueMethod::kAuto) use_exact = a.size() + b.size() <= kExactMannWhitneyLimit;
  if (use_exact && a.size() + b.size() > 20) {
    fail(ErrorKind::kConfig, "exact Mann-Whitney enumeration limited to 20 pooled values");
  }
  const double p = use_exact ? exact_p(ranking.ranks, a.size(), u)
                             : normal_p(a.size(), b.size(), u, ranking.tie_term);
  return {u, p, use_exact};
}

double repeated_subsample_utest(std::span<const double> group_a, std::span<const double> group_b, std::size_t n,
                                std::size_t iters, std::uint64_t seed) {
  if (iters < 1) fail(ErrorKind::kConfig, "iterations must be >= 1");
  if (n < 1) fail(ErrorKind::kConfig, "subsample size must be >= 1");
  if (group_a.size() < n || group_b.size() < n) {
    fail(ErrorKind::kSize, "subsample size " + std::to_string(n) + " exceeds group sizes " +
                               std::to_string(group_a.size()) + "/" + std::to_string(group_b.size()));
  }
  std::mt19937_64 rng(seed);
  auto draw = [&](std::span<const double> group) {
    std::vector<double> pool(group.begin(), group.end());
    for (std::size_t i = 0; i < n; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
      std::swap(pool[i], pool[pick(rng)]);
    }
    pool.resize(n);
    return pool;
  };
  std::vector<double> p_values;
  p_values.reserve(iters);
  for (std::size_t it = 0; it < iters; ++it) {
    const auto a = draw(group_a);
    const auto b = draw(group_b);
    p_values.push_back(mann_whitney_u(a, b).p_value);
  }
  return median(std::move(p_values));
}

}  // namespace lrp4rag

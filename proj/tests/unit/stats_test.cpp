#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "core/error.hpp"
#include "core/stats.hpp"

using namespace lrp4rag;

using V = std::vector<double>;

TEST(Profiles, Examples) {
  const auto m = Matrix::from_rows({{1, 2}, {3, 4}});
  EXPECT_EQ(prompt_relevance(m), (V{2, 3}));
  EXPECT_EQ(response_relevance(m), (V{1.5, 3.5}));
  EXPECT_EQ(prompt_relevance(Matrix::from_rows({{5, -1, 2}})), (V{5, -1, 2}));
  EXPECT_EQ(response_relevance(Matrix::from_rows({{5}, {-1}})), (V{5, -1}));
  EXPECT_EQ(prompt_relevance(Matrix(3, 4, 0.25)), V(4, 0.25));
  EXPECT_EQ(response_relevance(Matrix(3, 4, 0.25)), V(3, 0.25));
  EXPECT_THROW(prompt_relevance(Matrix()), Error);
}

TEST(Profiles, MatchBruteForce) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> d;
  Matrix m(7, 11);
  for (auto& v : m.values()) v = d(rng);
  const auto p = prompt_relevance(m);
  const auto r = response_relevance(m);
  for (std::size_t i = 0; i < 11; ++i) {
    double s = 0;
    for (std::size_t j = 0; j < 7; ++j) s += m(j, i);
    EXPECT_NEAR(p[i], s / 7, 1e-12);
  }
  for (std::size_t j = 0; j < 7; ++j) {
    double s = 0;
    for (std::size_t i = 0; i < 11; ++i) s += m(j, i);
    EXPECT_NEAR(r[j], s / 11, 1e-12);
  }
}

TEST(Resample1d, Examples) {
  EXPECT_EQ(resample_1d(V{1, 2, 3, 4}, 2), (V{1.5, 3.5}));
  EXPECT_EQ(resample_1d(V{3, -1, 7}, 3), (V{3, -1, 7}));
  EXPECT_EQ(resample_1d(V{1, 2, 3}, 2), (V{1, 2.5}));
  EXPECT_EQ(resample_1d(V{1, 2}, 3), (V{1, 2, 2}));
}

TEST(Resample1d, GridInvariants) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-5, 5);
  for (std::size_t n = 1; n <= 50; ++n) {
    V v(n);
    for (auto& x : v) x = u(rng);
    const double mu = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(n);
    for (std::size_t l = 1; l <= 50; ++l) {
      const auto out = resample_1d(v, l);
      ASSERT_EQ(out.size(), l);
      for (double x : out) ASSERT_TRUE(std::isfinite(x));
      if (n % l == 0) {
        const double mo = std::accumulate(out.begin(), out.end(), 0.0) / static_cast<double>(l);
        EXPECT_NEAR(mo, mu, 1e-12);
        const std::size_t w = n / l;
        for (std::size_t i = 0; i < l; ++i) {
          double s = 0;
          for (std::size_t k = 0; k < w; ++k) s += v[i * w + k];
          EXPECT_NEAR(out[i], s / static_cast<double>(w), 1e-12);
        }
      }
    }
  }
}

TEST(Resample2d, Examples) {
  const auto m = Matrix::from_rows({{1, 2}, {3, 4}});
  EXPECT_EQ(resample_2d(m, 2, 2), m);
  EXPECT_EQ(resample_2d(m, 1, 1), Matrix::from_rows({{2.5}}));
  const auto c = resample_2d(Matrix(4, 4, 0.7), 3, 9);
  EXPECT_EQ(c.rows(), 3u);
  EXPECT_EQ(c.cols(), 9u);
  for (double v : c.values()) EXPECT_NEAR(v, 0.7, 1e-15);
}

TEST(ClipNormalize, Examples) {
  EXPECT_EQ(clip_normalize(V{0, 5, 10}), (V{0, 0.5, 1}));
  EXPECT_EQ(clip_normalize(V{3, 3, 3}), (V{0.5, 0.5, 0.5}));
  V v(100);
  std::iota(v.begin(), v.end(), 0.0);
  v[42] = 1e6;
  const auto out = clip_normalize(v);
  EXPECT_EQ(out[42], 1.0);
  // The 99th-percentile value (99 here) also maps to 1, the rest stay below.
  const double p99 = percentile_nearest_rank(v, 99);
  EXPECT_EQ(p99, 99.0);
  EXPECT_EQ(out[99], 1.0);
  EXPECT_LT(out[98], 1.0);
}

TEST(ClipNormalize, IdempotentOnUnitRange) {
  V v(101);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<double>(i) / 100.0;
  // Clipping at 0/100 keeps the extremes, so the map is the identity.
  const auto out = clip_normalize(v, 0, 100);
  for (std::size_t i = 0; i < v.size(); ++i) EXPECT_NEAR(out[i], v[i], 1e-12);
  const auto twice = clip_normalize(out, 0, 100);
  for (std::size_t i = 0; i < v.size(); ++i) EXPECT_NEAR(twice[i], out[i], 1e-12);
}

TEST(MannWhitney, Examples) {
  const auto r = mann_whitney_u(V{1, 2, 3}, V{4, 5, 6});
  EXPECT_EQ(r.u, 0.0);
  EXPECT_TRUE(r.exact);
  EXPECT_NEAR(r.p_value, 0.1, 1e-12);
  const auto same = mann_whitney_u(V{1, 2, 2, 5}, V{5, 2, 1, 2});
  EXPECT_EQ(same.u, 8.0);
}

TEST(MannWhitney, UIdentity) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> len(1, 15), val(0, 9);
  for (int t = 0; t < 1000; ++t) {
    V a(static_cast<std::size_t>(len(rng))), b(static_cast<std::size_t>(len(rng)));
    for (auto& x : a) x = val(rng);
    for (auto& x : b) x = val(rng);
    const double ua = mann_whitney_u(a, b).u, ub = mann_whitney_u(b, a).u;
    EXPECT_NEAR(ua + ub, static_cast<double>(a.size() * b.size()), 1e-9);
  }
}

TEST(MannWhitney, ExactAgreesWithNormalOnSixAndSix) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> d;
  for (int t = 0; t < 200; ++t) {
    V a(6), b(6);
    for (auto& x : a) x = d(rng);
    for (auto& x : b) x = d(rng) + 0.8;
    const auto e = mann_whitney_u(a, b, PValueMethod::kExact);
    const auto n = mann_whitney_u(a, b, PValueMethod::kNormal);
    EXPECT_TRUE(e.exact);
    EXPECT_FALSE(n.exact);
    EXPECT_NEAR(e.p_value, n.p_value, 0.05);
  }
}

TEST(RepeatedSubsample, SeparatedGroups) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> d;
  V a(400), b(400);
  for (auto& x : a) x = d(rng);
  for (auto& x : b) x = d(rng) + 1.0;
  const double p = repeated_subsample_utest(a, b, 200, 50, 9);
  EXPECT_LT(p, 0.05);
  EXPECT_EQ(p, repeated_subsample_utest(a, b, 200, 50, 9));
}

TEST(RepeatedSubsample, FullDrawHasNoVariation) {
  const V a{0.3, 1.2, -0.4, 2.2, 0.9};
  const V b{1.3, 0.2, 0.4, 3.1, 1.9};
  const double p = mann_whitney_u(a, b).p_value;
  EXPECT_DOUBLE_EQ(repeated_subsample_utest(a, b, 5, 7, 1), p);
}

TEST(RepeatedSubsample, TooSmallGroupThrows) {
  try {
    repeated_subsample_utest(V{1, 2}, V{1, 2, 3}, 3, 5, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kSize);
  }
}

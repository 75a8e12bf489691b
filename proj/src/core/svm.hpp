#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "core/numerics.hpp"

namespace lrp4rag {

struct SvmOptions {
  double gamma = 0.0;  // <= 0 selects 1 / (feature_dim * feature_variance)
  double c = 1.0;
  double tolerance = 1e-3;
  std::uint64_t seed = 0;
  std::size_t max_iterations = 10'000'000;
};

// Soft-margin RBF-kernel SVM. Positive class (hallucinated) is y = +1.
struct SvmModel {
  double gamma = 1.0;
  double c = 1.0;
  double bias = 0.0;              // decision(x) = sum coef_i K(sv_i, x) + bias
  Matrix support_vectors;         // one row per support vector
  std::vector<double> coef;       // alpha_i * y_i
  double kkt_gap = 0.0;           // max violating-pair gap at termination
  std::size_t iterations = 0;

  double decision(std::span<const double> x) const;
  bool predict(std::span<const double> x) const { return decision(x) > 0.0; }
};

double default_gamma(const Matrix& features);
double rbf_kernel(std::span<const double> a, std::span<const double> b, double gamma);

// Sequential minimal optimization with maximal-violating-pair selection (second
// order for the partner). Index scans follow a seeded permutation, so ties in
// working-pair selection are broken deterministically per seed.
SvmModel train_svm_rbf(const Matrix& features, const std::vector<bool>& labels, const SvmOptions& options = {});

}  // namespace lrp4rag

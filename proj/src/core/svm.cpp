#include "core/svm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "core/error.hpp"

namespace lrp4rag {

double rbf_kernel(std::span<const double> a, std::span<const double> b, double gamma) {
  double d2 = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    d2 += d * d;
  }
  return std::exp(-gamma * d2);
}

double default_gamma(const Matrix& features) {
  if (features.empty()) fail(ErrorKind::kShape, "no features");
  const auto v = features.values();
  const double n = static_cast<double>(v.size());
  const double mu = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double var = 0.0;
  for (double x : v) var += (x - mu) * (x - mu);
  var /= n;
  const double dim = static_cast<double>(features.cols());
  return var > 0.0 ? 1.0 / (dim * var) : 1.0 / dim;
}

double SvmModel::decision(std::span<const double> x) const {
  if (x.size() != support_vectors.cols()) fail(ErrorKind::kShape, "feature width does not match the model");
  double f = bias;
  for (std::size_t i = 0; i < coef.size(); ++i) f += coef[i] * rbf_kernel(support_vectors.row(i), x, gamma);
  return f;
}

SvmModel train_svm_rbf(const Matrix& x, const std::vector<bool>& labels, const SvmOptions& options) {
  const std::size_t n = x.rows();
  if (n != labels.size()) fail(ErrorKind::kShape, "features and labels differ in length");
  if (n < 2) fail(ErrorKind::kTraining, "SVM needs at least two samples");
  const auto positives = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), true));
  if (positives == 0 || positives == n) fail(ErrorKind::kTraining, "SVM training set holds a single class");
  if (!(options.c > 0.0)) fail(ErrorKind::kConfig, "SVM C must be positive");

  const double gamma = options.gamma > 0.0 ? options.gamma : default_gamma(x);
  const double c = options.c;
  constexpr double kTau = 1e-12;

  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = labels[i] ? 1.0 : -1.0;
  // Q(i, j) = y_i y_j K(x_i, x_j)
  Matrix q(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      const double v = y[i] * y[j] * rbf_kernel(x.row(i), x.row(j), gamma);
      q(i, j) = v;
      q(j, i) = v;
    }
  }

  std::vector<double> alpha(n, 0.0);
  std::vector<double> grad(n, -1.0);  // Q alpha - e
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(options.seed);
  std::shuffle(order.begin(), order.end(), rng);

  const auto is_upper = [&](std::size_t t) { return alpha[t] >= c; };
  const auto is_lower = [&](std::size_t t) { return alpha[t] <= 0.0; };

  SvmModel model;
  model.gamma = gamma;
  model.c = c;
  std::size_t iter = 0;
  double gap = std::numeric_limits<double>::infinity();
  for (; iter < options.max_iterations; ++iter) {
    // i: maximal violator in I_up
    double gmax = -std::numeric_limits<double>::infinity();
    std::size_t i = n;
    for (std::size_t t : order) {
      const double score = -y[t] * grad[t];
      const bool in_up = y[t] > 0 ? !is_upper(t) : !is_lower(t);
      if (in_up && score > gmax) {
        gmax = score;
        i = t;
      }
    }
    if (i == n) {
      gap = 0.0;
      break;
    }
    // j: best second-order partner in I_low
    double gmax2 = -std::numeric_limits<double>::infinity();
    double best_obj = std::numeric_limits<double>::infinity();
    std::size_t j = n;
    for (std::size_t t : order) {
      const bool in_low = y[t] > 0 ? !is_lower(t) : !is_upper(t);
      if (!in_low) continue;
      const double score = y[t] * grad[t];  // = -(-y_t G_t)
      gmax2 = std::max(gmax2, score);
      const double grad_diff = gmax + score;
      if (grad_diff > 0.0) {
        double quad = q(i, i) + q(t, t) - 2.0 * y[i] * y[t] * q(i, t);
        if (quad <= 0.0) quad = kTau;
        const double obj = -(grad_diff * grad_diff) / quad;
        if (obj < best_obj) {
          best_obj = obj;
          j = t;
        }
      }
    }
    gap = gmax + gmax2;
    if (gap < options.tolerance || j == n) break;

    const double old_ai = alpha[i];
    const double old_aj = alpha[j];
    if (y[i] != y[j]) {
      double quad = q(i, i) + q(j, j) + 2.0 * q(i, j);
      if (quad <= 0.0) quad = kTau;
      const double delta = (-grad[i] - grad[j]) / quad;
      const double diff = alpha[i] - alpha[j];
      alpha[i] += delta;
      alpha[j] += delta;
      if (diff > 0.0) {
        if (alpha[j] < 0.0) {
          alpha[j] = 0.0;
          alpha[i] = diff;
        }
      } else if (alpha[i] < 0.0) {
        alpha[i] = 0.0;
        alpha[j] = -diff;
      }
      if (diff > 0.0) {
        if (alpha[i] > c) {
          alpha[i] = c;
          alpha[j] = c - diff;
        }
      } else if (alpha[j] > c) {
        alpha[j] = c;
        alpha[i] = c + diff;
      }
    } else {
      double quad = q(i, i) + q(j, j) - 2.0 * q(i, j);
      if (quad <= 0.0) quad = kTau;
      const double delta = (grad[i] - grad[j]) / quad;
      const double sum = alpha[i] + alpha[j];
      alpha[i] -= delta;
      alpha[j] += delta;
      if (sum > c) {
        if (alpha[i] > c) {
          alpha[i] = c;
          alpha[j] = sum - c;
        }
        if (alpha[j] > c) {
          alpha[j] = c;
          alpha[i] = sum - c;
        }
      } else {
        if (alpha[j] < 0.0) {
          alpha[j] = 0.0;
          alpha[i] = sum;
        }
        if (alpha[i] < 0.0) {
          alpha[i] = 0.0;
          alpha[j] = sum;
        }
      }
    }
    const double dai = alpha[i] - old_ai;
    const double daj = alpha[j] - old_aj;
    for (std::size_t t = 0; t < n; ++t) grad[t] += q(i, t) * dai + q(j, t) * daj;
  }
  if (iter == options.max_iterations) fail(ErrorKind::kTraining, "SMO did not converge within the iteration budget");

  // rho from free vectors, else midpoint of the feasible interval
  double ub = std::numeric_limits<double>::infinity();
  double lb = -std::numeric_limits<double>::infinity();
  double free_sum = 0.0;
  std::size_t free_count = 0;
  for (std::size_t t = 0; t < n; ++t) {
    const double yg = y[t] * grad[t];
    if (is_upper(t)) {
      if (y[t] < 0) ub = std::min(ub, yg); else lb = std::max(lb, yg);
    } else if (is_lower(t)) {
      if (y[t] > 0) ub = std::min(ub, yg); else lb = std::max(lb, yg);
    } else {
      free_sum += yg;
      ++free_count;
    }
  }
  const double rho = free_count > 0 ? free_sum / static_cast<double>(free_count) : (ub + lb) / 2.0;

  std::size_t sv_count = 0;
  for (double a : alpha) sv_count += a > 0.0 ? 1 : 0;
  model.support_vectors = Matrix(sv_count, x.cols());
  std::size_t row = 0;
  for (std::size_t t = 0; t < n; ++t) {
    if (alpha[t] <= 0.0) continue;
    std::copy(x.row(t).begin(), x.row(t).end(), model.support_vectors.row(row).begin());
    model.coef.push_back(alpha[t] * y[t]);
    ++row;
  }
  model.bias = -rho;
  model.kkt_gap = std::max(gap, 0.0);
  model.iterations = iter;
  return model;
}

}  // namespace lrp4rag

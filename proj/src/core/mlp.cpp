#include "core/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "core/error.hpp"

namespace lrp4rag {

namespace {

double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

// log(1 + e^z) without overflow
double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

void check_training_set(const Matrix& x, const std::vector<bool>& labels) {
  if (x.rows() != labels.size()) fail(ErrorKind::kShape, "features and labels differ in length");
  if (x.rows() < 2) fail(ErrorKind::kTraining, "need at least two samples");
  const auto pos = std::count(labels.begin(), labels.end(), true);
  if (pos == 0 || static_cast<std::size_t>(pos) == labels.size()) {
    fail(ErrorKind::kTraining, "training set holds a single class");
  }
}

}  // namespace

MlpModel MlpModel::init(std::size_t input_dim, std::size_t hidden, std::uint64_t seed) {
  if (input_dim < 1 || hidden < 1) fail(ErrorKind::kConfig, "MLP dimensions must be >= 1");
  MlpModel m;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> in_dist(0.0, 1.0 / std::sqrt(static_cast<double>(input_dim)));
  std::normal_distribution<double> out_dist(0.0, 1.0 / std::sqrt(static_cast<double>(hidden)));
  m.w1 = Matrix(input_dim, hidden);
  for (double& v : m.w1.values()) v = in_dist(rng);
  m.b1.assign(hidden, 0.0);
  m.w2.resize(hidden);
  for (double& v : m.w2) v = out_dist(rng);
  return m;
}

MlpModel MlpModel::zeros_like() const {
  MlpModel g;
  g.w1 = Matrix(w1.rows(), w1.cols());
  g.b1.assign(b1.size(), 0.0);
  g.w2.assign(w2.size(), 0.0);
  return g;
}

std::vector<std::span<double>> MlpModel::blocks() {
  return {w1.values(), std::span<double>(b1), std::span<double>(w2), std::span<double>(&b2, 1)};
}

double MlpModel::logit(std::span<const double> x) const {
  if (x.size() != w1.rows()) fail(ErrorKind::kShape, "feature width does not match the model");
  double z = b2;
  for (std::size_t h = 0; h < b1.size(); ++h) {
    double a = b1[h];
    for (std::size_t i = 0; i < x.size(); ++i) a += x[i] * w1(i, h);
    z += w2[h] * std::tanh(a);
  }
  return z;
}

double MlpModel::probability(std::span<const double> x) const { return sigmoid(logit(x)); }

double mlp_loss(const MlpModel& model, const Matrix& x, const std::vector<bool>& labels) {
  double loss = 0.0;
  for (std::size_t s = 0; s < x.rows(); ++s) {
    const double z = model.logit(x.row(s));
    loss += softplus(z) - (labels[s] ? z : 0.0);
  }
  return loss / static_cast<double>(x.rows());
}

double mlp_loss_and_grad(const MlpModel& model, const Matrix& x, const std::vector<bool>& labels, MlpModel& grad) {
  if (x.rows() != labels.size()) fail(ErrorKind::kShape, "features and labels differ in length");
  grad = model.zeros_like();
  const std::size_t hidden = model.b1.size();
  const double inv_n = 1.0 / static_cast<double>(x.rows());
  std::vector<double> act(hidden);
  double loss = 0.0;
  for (std::size_t s = 0; s < x.rows(); ++s) {
    const auto xs = x.row(s);
    double z = model.b2;
    for (std::size_t h = 0; h < hidden; ++h) {
      double a = model.b1[h];
      for (std::size_t i = 0; i < xs.size(); ++i) a += xs[i] * model.w1(i, h);
      act[h] = std::tanh(a);
      z += model.w2[h] * act[h];
    }
    const double y = labels[s] ? 1.0 : 0.0;
    loss += softplus(z) - y * z;
    const double dz = (sigmoid(z) - y) * inv_n;
    grad.b2 += dz;
    for (std::size_t h = 0; h < hidden; ++h) {
      grad.w2[h] += dz * act[h];
      const double da = dz * model.w2[h] * (1.0 - act[h] * act[h]);
      grad.b1[h] += da;
      for (std::size_t i = 0; i < xs.size(); ++i) grad.w1(i, h) += da * xs[i];
    }
  }
  return loss * inv_n;
}

MlpModel train_mlp(const Matrix& x, const std::vector<bool>& labels, const MlpOptions& options,
                   std::vector<double>* loss_history) {
  check_training_set(x, labels);
  if (!(options.lr > 0.0)) fail(ErrorKind::kConfig, "learning rate must be positive");
  MlpModel model = MlpModel::init(x.cols(), options.hidden, options.seed);
  MlpModel grad;
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    const double loss = mlp_loss_and_grad(model, x, labels, grad);
    if (loss_history) loss_history->push_back(loss);
    auto params = model.blocks();
    auto grads = grad.blocks();
    for (std::size_t b = 0; b < params.size(); ++b)
      for (std::size_t i = 0; i < params[b].size(); ++i) params[b][i] -= options.lr * grads[b][i];
  }
  if (loss_history) loss_history->push_back(mlp_loss(model, x, labels));
  return model;
}

}  // namespace lrp4rag

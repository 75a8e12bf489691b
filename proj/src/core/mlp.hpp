#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "core/numerics.hpp"

namespace lrp4rag {

struct MlpOptions {
  std::size_t hidden = 32;
  std::size_t epochs = 1000;
  double lr = 0.5;
  std::uint64_t seed = 0;
};

// One tanh hidden layer, sigmoid output.
struct MlpModel {
  Matrix w1;                // d x hidden
  std::vector<double> b1;   // hidden
  std::vector<double> w2;   // hidden
  double b2 = 0.0;

  static MlpModel init(std::size_t input_dim, std::size_t hidden, std::uint64_t seed);
  MlpModel zeros_like() const;
  std::vector<std::span<double>> blocks();

  double logit(std::span<const double> x) const;
  double probability(std::span<const double> x) const;
  bool predict(std::span<const double> x) const { return probability(x) > 0.5; }
};

// Mean binary cross-entropy over the rows of `x`.
double mlp_loss(const MlpModel& model, const Matrix& x, const std::vector<bool>& labels);

// Returns the loss; writes d loss / d params into `grad` (shaped like model).
double mlp_loss_and_grad(const MlpModel& model, const Matrix& x, const std::vector<bool>& labels, MlpModel& grad);

// Full-batch gradient descent. `loss_history`, when given, receives the loss
// before every epoch plus the final loss.
MlpModel train_mlp(const Matrix& x, const std::vector<bool>& labels, const MlpOptions& options = {},
                   std::vector<double>* loss_history = nullptr);

}  // namespace lrp4rag

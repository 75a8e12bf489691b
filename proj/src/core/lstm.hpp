#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "core/numerics.hpp"

namespace lrp4rag {

struct LstmOptions {
  std::size_t hidden = 256;
  std::size_t layers = 2;
  std::size_t epochs = 50;
  double lr = 5e-4;
  std::size_t batch_size = 16;
  bool shuffle = true;  // reshuffle sample order every epoch
  std::uint64_t seed = 0;
};

// Gate rows are stacked [f; i; o; c~], each `hidden` tall, acting on [x_t, h_{t-1}].
struct LstmLayer {
  Matrix w;               // 4H x (input + H)
  std::vector<double> b;  // 4H
};

struct LstmState {
  std::vector<double> h;
  std::vector<double> c;
};

struct LstmModel {
  std::size_t input_dim = 0;
  std::size_t hidden = 0;
  std::vector<LstmLayer> layers;
  std::vector<double> head_w;  // hidden
  double head_b = 0.0;

  static LstmModel init(std::size_t input_dim, std::size_t hidden, std::size_t layers, std::uint64_t seed);
  LstmModel zeros_like() const;
  std::vector<std::span<double>> blocks();

  // Rows of `sequence` are the time steps.
  double logit(const Matrix& sequence) const;
  double probability(const Matrix& sequence) const;
  bool predict(const Matrix& sequence) const { return probability(sequence) > 0.5; }
};

LstmState lstm_step(std::span<const double> x, const LstmState& prev, const LstmLayer& layer);

// Mean BCE over `indices` (all samples when empty) and its gradient.
double lstm_loss_and_grad(const LstmModel& model, std::span<const Matrix> sequences, const std::vector<bool>& labels,
                          std::span<const std::size_t> indices, LstmModel& grad);

// Mini-batch Adam with backpropagation through the full sequence.
LstmModel train_lstm(std::span<const Matrix> sequences, const std::vector<bool>& labels,
                     const LstmOptions& options = {});

}  // namespace lrp4rag

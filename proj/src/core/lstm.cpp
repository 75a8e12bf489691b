#include "core/lstm.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "core/error.hpp"
#include "core/optim.hpp"

namespace lrp4rag {

namespace {

double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }
double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

// Per-step activations kept for the backward pass.
struct StepCache {
  std::vector<double> input;  // [x_t, h_{t-1}]
  std::vector<double> f, i, o, g;
  std::vector<double> c_prev, c, tanh_c;
  std::vector<double> h;
};

StepCache forward_cached(std::span<const double> x, const LstmState& prev, const LstmLayer& layer, std::size_t hidden) {
  StepCache s;
  s.input.assign(x.begin(), x.end());
  s.input.insert(s.input.end(), prev.h.begin(), prev.h.end());
  if (s.input.size() != layer.w.cols()) fail(ErrorKind::kShape, "LSTM input width does not match the layer");
  std::vector<double> z(layer.b);
  for (std::size_t r = 0; r < 4 * hidden; ++r) {
    const auto wr = layer.w.row(r);
    double acc = 0.0;
    for (std::size_t k = 0; k < wr.size(); ++k) acc += wr[k] * s.input[k];
    z[r] += acc;
  }
  s.f.resize(hidden);
  s.i.resize(hidden);
  s.o.resize(hidden);
  s.g.resize(hidden);
  s.c.resize(hidden);
  s.tanh_c.resize(hidden);
  s.h.resize(hidden);
  s.c_prev = prev.c;
  for (std::size_t k = 0; k < hidden; ++k) {
    s.f[k] = sigmoid(z[k]);
    s.i[k] = sigmoid(z[hidden + k]);
    s.o[k] = sigmoid(z[2 * hidden + k]);
    s.g[k] = std::tanh(z[3 * hidden + k]);
    s.c[k] = s.f[k] * prev.c[k] + s.i[k] * s.g[k];
    s.tanh_c[k] = std::tanh(s.c[k]);
    s.h[k] = s.o[k] * s.tanh_c[k];
  }
  return s;
}

std::size_t layer_hidden(const LstmLayer& layer) { return layer.b.size() / 4; }

// Runs all layers over one sequence, keeping caches per layer and step.
std::vector<std::vector<StepCache>> forward_sequence(const LstmModel& model, const Matrix& seq) {
  if (seq.cols() != model.input_dim) {
    fail(ErrorKind::kShape, "sequence width " + std::to_string(seq.cols()) + " does not match LSTM input " +
                                std::to_string(model.input_dim));
  }
  if (seq.rows() == 0) fail(ErrorKind::kShape, "empty sequence");
  std::vector<std::vector<StepCache>> caches(model.layers.size());
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    LstmState state{std::vector<double>(model.hidden, 0.0), std::vector<double>(model.hidden, 0.0)};
    for (std::size_t t = 0; t < seq.rows(); ++t) {
      std::span<const double> x = l == 0 ? seq.row(t) : std::span<const double>(caches[l - 1][t].h);
      caches[l].push_back(forward_cached(x, state, model.layers[l], model.hidden));
      state.h = caches[l].back().h;
      state.c = caches[l].back().c;
    }
  }
  return caches;
}

double head_logit(const LstmModel& model, const std::vector<double>& h) {
  double z = model.head_b;
  for (std::size_t k = 0; k < h.size(); ++k) z += model.head_w[k] * h[k];
  return z;
}

}  // namespace

LstmState lstm_step(std::span<const double> x, const LstmState& prev, const LstmLayer& layer) {
  const std::size_t hidden = layer_hidden(layer);
  if (prev.h.size() != hidden || prev.c.size() != hidden) fail(ErrorKind::kShape, "LSTM state width mismatch");
  auto s = forward_cached(x, prev, layer, hidden);
  return {std::move(s.h), std::move(s.c)};
}

LstmModel LstmModel::init(std::size_t input_dim, std::size_t hidden, std::size_t layers, std::uint64_t seed) {
  if (input_dim < 1 || hidden < 1 || layers < 1) fail(ErrorKind::kConfig, "LSTM dimensions must be >= 1");
  LstmModel m;
  m.input_dim = input_dim;
  m.hidden = hidden;
  std::mt19937_64 rng(seed);
  for (std::size_t l = 0; l < layers; ++l) {
    const std::size_t in = (l == 0 ? input_dim : hidden) + hidden;
    std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(static_cast<double>(in)));
    LstmLayer layer{Matrix(4 * hidden, in), std::vector<double>(4 * hidden, 0.0)};
    for (double& v : layer.w.values()) v = dist(rng);
    // forget-gate bias starts at 1
    std::fill(layer.b.begin(), layer.b.begin() + static_cast<std::ptrdiff_t>(hidden), 1.0);
    m.layers.push_back(std::move(layer));
  }
  std::normal_distribution<double> head_dist(0.0, 1.0 / std::sqrt(static_cast<double>(hidden)));
  m.head_w.resize(hidden);
  for (double& v : m.head_w) v = head_dist(rng);
  return m;
}

LstmModel LstmModel::zeros_like() const {
  LstmModel g;
  g.input_dim = input_dim;
  g.hidden = hidden;
  for (const auto& l : layers) g.layers.push_back({Matrix(l.w.rows(), l.w.cols()), std::vector<double>(l.b.size())});
  g.head_w.assign(head_w.size(), 0.0);
  return g;
}

std::vector<std::span<double>> LstmModel::blocks() {
  std::vector<std::span<double>> out;
  for (auto& l : layers) {
    out.push_back(l.w.values());
    out.emplace_back(l.b);
  }
  out.emplace_back(head_w);
  out.emplace_back(&head_b, 1);
  return out;
}

double LstmModel::logit(const Matrix& sequence) const {
  const auto caches = forward_sequence(*this, sequence);
  return head_logit(*this, caches.back().back().h);
}

double LstmModel::probability(const Matrix& sequence) const { return sigmoid(logit(sequence)); }

double lstm_loss_and_grad(const LstmModel& model, std::span<const Matrix> sequences, const std::vector<bool>& labels,
                          std::span<const std::size_t> indices, LstmModel& grad) {
  if (sequences.size() != labels.size()) fail(ErrorKind::kShape, "sequences and labels differ in length");
  std::vector<std::size_t> all;
  if (indices.empty()) {
    all.resize(sequences.size());
    std::iota(all.begin(), all.end(), 0);
    indices = all;
  }
  grad = model.zeros_like();
  const std::size_t hidden = model.hidden;
  const std::size_t n_layers = model.layers.size();
  const double inv_n = 1.0 / static_cast<double>(indices.size());
  double loss = 0.0;

  for (std::size_t idx : indices) {
    const Matrix& seq = sequences[idx];
    const auto caches = forward_sequence(model, seq);
    const auto& top = caches.back().back().h;
    const double z = head_logit(model, top);
    const double y = labels[idx] ? 1.0 : 0.0;
    loss += softplus(z) - y * z;
    const double dz = (sigmoid(z) - y) * inv_n;
    grad.head_b += dz;
    for (std::size_t k = 0; k < hidden; ++k) grad.head_w[k] += dz * top[k];

    const std::size_t steps = seq.rows();
    // dh arriving from the layer above (or the head) at each step
    std::vector<std::vector<double>> dh_above(steps, std::vector<double>(hidden, 0.0));
    for (std::size_t k = 0; k < hidden; ++k) dh_above[steps - 1][k] = dz * model.head_w[k];

    for (std::size_t l = n_layers; l-- > 0;) {
      const auto& layer = model.layers[l];
      auto& g_layer = grad.layers[l];
      const std::size_t in_width = layer.w.cols() - hidden;
      std::vector<std::vector<double>> dx_below(steps, std::vector<double>(in_width, 0.0));
      std::vector<double> dh_rec(hidden, 0.0);
      std::vector<double> dc_rec(hidden, 0.0);
      std::vector<double> dgates(4 * hidden);
      for (std::size_t t = steps; t-- > 0;) {
        const StepCache& s = caches[l][t];
        for (std::size_t k = 0; k < hidden; ++k) {
          const double dh = dh_above[t][k] + dh_rec[k];
          const double dc = dc_rec[k] + dh * s.o[k] * (1.0 - s.tanh_c[k] * s.tanh_c[k]);
          const double d_o = dh * s.tanh_c[k];
          const double d_f = dc * s.c_prev[k];
          const double d_i = dc * s.g[k];
          const double d_g = dc * s.i[k];
          dc_rec[k] = dc * s.f[k];
          dgates[k] = d_f * s.f[k] * (1.0 - s.f[k]);
          dgates[hidden + k] = d_i * s.i[k] * (1.0 - s.i[k]);
          dgates[2 * hidden + k] = d_o * s.o[k] * (1.0 - s.o[k]);
          dgates[3 * hidden + k] = d_g * (1.0 - s.g[k] * s.g[k]);
        }
        std::fill(dh_rec.begin(), dh_rec.end(), 0.0);
        for (std::size_t r = 0; r < 4 * hidden; ++r) {
          const double dg = dgates[r];
          if (dg == 0.0) continue;
          g_layer.b[r] += dg;
          auto gw = g_layer.w.row(r);
          const auto w = layer.w.row(r);
          for (std::size_t c = 0; c < s.input.size(); ++c) gw[c] += dg * s.input[c];
          for (std::size_t c = 0; c < in_width; ++c) dx_below[t][c] += dg * w[c];
          for (std::size_t c = 0; c < hidden; ++c) dh_rec[c] += dg * w[in_width + c];
        }
      }
      if (l > 0) dh_above = std::move(dx_below);
    }
  }
  return loss * inv_n;
}

LstmModel train_lstm(std::span<const Matrix> sequences, const std::vector<bool>& labels, const LstmOptions& options) {
  if (sequences.size() != labels.size()) fail(ErrorKind::kShape, "sequences and labels differ in length");
  if (sequences.size() < 2) fail(ErrorKind::kTraining, "need at least two samples");
  const auto pos = std::count(labels.begin(), labels.end(), true);
  if (pos == 0 || static_cast<std::size_t>(pos) == labels.size()) {
    fail(ErrorKind::kTraining, "training set holds a single class");
  }
  for (const auto& s : sequences) {
    if (s.rows() != sequences.front().rows() || s.cols() != sequences.front().cols()) {
      fail(ErrorKind::kShape, "LSTM inputs must share one shape");
    }
  }
  if (options.batch_size < 1) fail(ErrorKind::kConfig, "batch size must be >= 1");
  if (!(options.lr > 0.0)) fail(ErrorKind::kConfig, "learning rate must be positive");

  LstmModel model = LstmModel::init(sequences.front().cols(), options.hidden, options.layers, options.seed);
  Adam adam(options.lr);
  std::mt19937_64 rng(options.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(sequences.size());
  std::iota(order.begin(), order.end(), 0);
  LstmModel grad;
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    if (options.shuffle) std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
      const std::size_t end = std::min(order.size(), start + options.batch_size);
      const std::span<const std::size_t> batch(order.data() + start, end - start);
      lstm_loss_and_grad(model, sequences, labels, batch, grad);
      adam.step(model.blocks(), grad.blocks());
    }
  }
  return model;
}

}  // namespace lrp4rag

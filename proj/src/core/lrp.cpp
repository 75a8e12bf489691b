#include "core/lrp.hpp"

#include <cmath>
#include <string>

#include "core/error.hpp"

namespace lrp4rag {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

void require_shape(const Matrix& m, std::size_t rows, std::size_t cols, const char* what) {
  if (m.rows() != rows || m.cols() != cols) {
    fail(ErrorKind::kShape, std::string(what) + ": got " + m.shape_string() + ", expected " +
                                std::to_string(rows) + "x" + std::to_string(cols));
  }
}

}  // namespace

std::vector<double> init_relevance(std::span<const double> logits) {
  return init_relevance_at(logits, argmax_token(logits));
}

std::vector<double> init_relevance_at(std::span<const double> logits, TokenId token) {
  if (logits.empty()) fail(ErrorKind::kShape, "empty logits");
  if (token < 0 || static_cast<std::size_t>(token) >= logits.size()) {
    fail(ErrorKind::kShape, "target token outside logits");
  }
  std::vector<double> r(logits.size(), 0.0);
  r[token] = logits[token];
  return r;
}

MatMulRelevance prop_matmul(const Matrix& r_out, const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) fail(ErrorKind::kShape, "prop_matmul: A and B do not multiply");
  require_shape(r_out, a.rows(), b.cols(), "prop_matmul relevance");
  return {hadamard(matmul(r_out, transpose(b)), a), hadamard(matmul(transpose(a), r_out), b)};
}

Matrix prop_linear(const Matrix& r_out, const Matrix& weight, const Matrix& input) {
  if (input.cols() != weight.rows()) fail(ErrorKind::kShape, "prop_linear: input and weight do not multiply");
  require_shape(r_out, input.rows(), weight.cols(), "prop_linear relevance");
  return hadamard(matmul(r_out, transpose(weight)), input);
}

Matrix prop_jacobian(const Matrix& r_out, const OpKind& kind, const Matrix& input) {
  require_shape(r_out, input.rows(), input.cols(), "prop_jacobian relevance");
  Matrix r_in(input.rows(), input.cols());
  const std::size_t n = input.cols();
  for (std::size_t row = 0; row < input.rows(); ++row) {
    const auto x = input.row(row);
    const auto r = r_out.row(row);
    auto out = r_in.row(row);
    if (has_diagonal_jacobian(kind)) {
      const auto d = diagonal_derivative(kind, x);
      for (std::size_t j = 0; j < n; ++j) out[j] = r[j] * d[j] * x[j];
      continue;
    }
    const Matrix jac = jacobian(kind, x);
    // (r J)_j = sum_i r_i J(i, j)
    for (std::size_t i = 0; i < n; ++i) {
      if (r[i] == 0.0) continue;
      const auto jrow = jac.row(i);
      for (std::size_t j = 0; j < n; ++j) out[j] += r[i] * jrow[j];
    }
    for (std::size_t j = 0; j < n; ++j) out[j] *= x[j];
  }
  return r_in;
}

std::vector<Matrix> prop_add(const Matrix& r_out, std::span<const Matrix* const> branches) {
  std::vector<Matrix> out;
  out.reserve(branches.size());
  for (const Matrix* b : branches) out.push_back(hadamard(r_out, *b));
  return out;
}

std::vector<double> epsilon_normalize(std::span<const double> r, double eps) {
  double mass = 0.0;
  for (double v : r) mass += std::abs(v);
  std::vector<double> out(r.begin(), r.end());
  for (double& v : out) v /= (mass + eps);
  return out;
}

namespace {

void normalize_in_place(Matrix& m, double eps) {
  const auto normalized = epsilon_normalize(m.values(), eps);
  std::copy(normalized.begin(), normalized.end(), m.values().begin());
}

// Relevance carried by each traced value; absent until some consumer delivers.
class RelevanceState {
 public:
  RelevanceState(const ForwardTrace& trace, const LrpOptions& options)
      : trace_(trace), options_(options), relevance_(trace.values.size()) {}

  void deliver(ValueId id, Matrix r) {
    const Matrix& value = trace_.values.at(id);
    if (r.rows() != value.rows() || r.cols() != value.cols()) {
      fail(ErrorKind::kGraph, "relevance shape " + r.shape_string() + " does not match value " + value.shape_string());
    }
    if (options_.normalize_per_entry) normalize_in_place(r, options_.epsilon);
    auto& slot = relevance_[id];
    if (slot) {
      add_into(*slot, r);  // fan-out: sum what every consumer sends back
    } else {
      slot = std::move(r);
    }
  }

  const std::optional<Matrix>& at(ValueId id) const { return relevance_.at(id); }

 private:
  const ForwardTrace& trace_;
  const LrpOptions& options_;
  std::vector<std::optional<Matrix>> relevance_;
};

}  // namespace

std::vector<double> backward_pass(const ForwardTrace& trace, std::span<const double> r_init,
                                  const LrpOptions& options) {
  const ValueId head = trace.head_output();
  const Matrix& head_value = trace.values.at(head);
  if (head_value.rows() != 1 || head_value.cols() != r_init.size()) {
    fail(ErrorKind::kShape, "initial relevance length " + std::to_string(r_init.size()) +
                                " does not match head output " + head_value.shape_string());
  }
  const auto& vals = trace.values;
  RelevanceState state(trace, options);
  state.deliver(head, Matrix::row_vector(r_init));

  std::optional<std::vector<double>> per_token;
  for (auto it = trace.entries.rbegin(); it != trace.entries.rend(); ++it) {
    const auto& maybe_r = state.at(entry_output(*it));
    if (!maybe_r) continue;
    const Matrix& r = *maybe_r;
    std::visit(
        overloaded{
            [&](const EmbedEntry&) {
              std::vector<double> tokens(r.rows(), 0.0);
              for (std::size_t i = 0; i < r.rows(); ++i)
                for (double v : r.row(i)) tokens[i] += v;
              per_token = std::move(tokens);
            },
            [&](const LinearEntry& e) { state.deliver(e.input, prop_linear(r, *e.weight, vals.at(e.input))); },
            [&](const MatMulEntry& e) {
              auto [ra, rb] = prop_matmul(r, vals.at(e.lhs), vals.at(e.rhs));
              state.deliver(e.lhs, std::move(ra));
              state.deliver(e.rhs, std::move(rb));
            },
            [&](const NonParamEntry& e) {
              if (std::holds_alternative<op::Add>(e.kind)) {
                std::vector<const Matrix*> branches;
                for (auto id : e.inputs) branches.push_back(&vals.at(id));
                auto parts = prop_add(r, branches);
                for (std::size_t i = 0; i < e.inputs.size(); ++i) {
                  if (!trace.is_constant.at(e.inputs[i])) state.deliver(e.inputs[i], std::move(parts[i]));
                }
                return;
              }
              state.deliver(e.inputs.at(0), prop_jacobian(r, e.kind, vals.at(e.inputs.at(0))));
            },
            [&](const ViewEntry& e) {
              std::visit(overloaded{
                             [&](const view::Transpose&) { state.deliver(e.inputs.at(0), transpose(r)); },
                             [&](const view::SliceCols& s) {
                               const Matrix& src = vals.at(e.inputs.at(0));
                               Matrix back(src.rows(), src.cols());
                               for (std::size_t i = 0; i < r.rows(); ++i)
                                 for (std::size_t c = 0; c < s.width; ++c) back(i, s.offset + c) = r(i, c);
                               state.deliver(e.inputs.at(0), std::move(back));
                             },
                             [&](const view::ConcatCols&) {
                               std::size_t offset = 0;
                               for (auto id : e.inputs) {
                                 const Matrix& src = vals.at(id);
                                 Matrix part(src.rows(), src.cols());
                                 for (std::size_t i = 0; i < src.rows(); ++i)
                                   for (std::size_t c = 0; c < src.cols(); ++c) part(i, c) = r(i, offset + c);
                                 offset += src.cols();
                                 state.deliver(id, std::move(part));
                               }
                             },
                             [&](const view::SelectRow& s) {
                               const Matrix& src = vals.at(e.inputs.at(0));
                               Matrix back(src.rows(), src.cols());
                               for (std::size_t c = 0; c < src.cols(); ++c) back(s.row, c) = r(0, c);
                               state.deliver(e.inputs.at(0), std::move(back));
                             },
                         },
                         e.kind);
            },
        },
        *it);
  }
  if (!per_token) fail(ErrorKind::kGraph, "relevance never reached the embedding entry");
  if (per_token->size() != trace.seq_len) fail(ErrorKind::kGraph, "embedding width disagrees with seq_len");
  return epsilon_normalize(*per_token, options.epsilon);
}

std::vector<double> relevance_row(const ForwardTrace& trace, std::size_t prompt_len, std::optional<TokenId> target,
                                  const LrpOptions& options) {
  if (prompt_len > trace.seq_len) {
    fail(ErrorKind::kShape, "prompt length " + std::to_string(prompt_len) + " exceeds traced sequence " +
                                std::to_string(trace.seq_len));
  }
  const auto r0 = target ? init_relevance_at(trace.logits, *target) : init_relevance(trace.logits);
  auto full = backward_pass(trace, r0, options);
  full.resize(prompt_len);  // relevance on earlier response tokens is dropped
  return full;
}

Matrix build_relevance_matrix(std::span<const ForwardTrace> traces, std::size_t prompt_len,
                              std::span<const TokenId> targets, const LrpOptions& options) {
  if (traces.empty()) fail(ErrorKind::kShape, "no traces");
  if (!targets.empty() && targets.size() != traces.size()) fail(ErrorKind::kShape, "targets/traces length mismatch");
  Matrix r_star(traces.size(), prompt_len);
  for (std::size_t t = 0; t < traces.size(); ++t) {
    if (traces[t].seq_len != prompt_len + t) {
      fail(ErrorKind::kShape, "trace " + std::to_string(t) + " covers " + std::to_string(traces[t].seq_len) +
                                  " tokens, expected " + std::to_string(prompt_len + t));
    }
    const auto target = targets.empty() ? std::nullopt : std::optional<TokenId>(targets[t]);
    const auto row = relevance_row(traces[t], prompt_len, target, options);
    std::copy(row.begin(), row.end(), r_star.row(t).begin());
  }
  return r_star;
}

}  // namespace lrp4rag

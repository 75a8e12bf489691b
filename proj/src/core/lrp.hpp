#pragma once

#include <optional>
#include <span>
#include <vector>

#include "core/numerics.hpp"
#include "core/transformer.hpp"

namespace lrp4rag {

struct LrpOptions {
  double epsilon = 1e-6;
  // Also rescale each propagated relevance tensor to unit L1 mass.
  bool normalize_per_entry = false;
};

// One-hot over the vocabulary holding the maximum logit (lowest index on ties).
std::vector<double> init_relevance(std::span<const double> logits);
// Same, but seeded at a chosen token's logit (teacher-forced responses).
std::vector<double> init_relevance_at(std::span<const double> logits, TokenId token);

struct MatMulRelevance {
  Matrix lhs;  // shape of A
  Matrix rhs;  // shape of B
};

// C = A * B:  R_A = (R_C B^T) .* A,  R_B = (A^T R_C) .* B
MatMulRelevance prop_matmul(const Matrix& r_out, const Matrix& a, const Matrix& b);

// O = I * W:  R_I = (R W^T) .* I
Matrix prop_linear(const Matrix& r_out, const Matrix& weight, const Matrix& input);

// Row by row: R_I = (R J(I)) .* I
Matrix prop_jacobian(const Matrix& r_out, const OpKind& kind, const Matrix& input);

// Residual sum: each branch gets R .* branch (identity Jacobian).
std::vector<Matrix> prop_add(const Matrix& r_out, std::span<const Matrix* const> branches);

// r / (sum |r| + eps)
std::vector<double> epsilon_normalize(std::span<const double> r, double eps);

// Per-input-token relevance, length trace.seq_len, epsilon-normalized.
std::vector<double> backward_pass(const ForwardTrace& trace, std::span<const double> r_init,
                                  const LrpOptions& options = {});

// Relevance of the first `prompt_len` input tokens for one generation step.
std::vector<double> relevance_row(const ForwardTrace& trace, std::size_t prompt_len,
                                  std::optional<TokenId> target = std::nullopt,
                                  const LrpOptions& options = {});

// R*: one row per trace (response position), one column per prompt token.
// With `targets` empty, each row starts from the step's argmax logit.
Matrix build_relevance_matrix(std::span<const ForwardTrace> traces, std::size_t prompt_len,
                              std::span<const TokenId> targets = {}, const LrpOptions& options = {});

}  // namespace lrp4rag

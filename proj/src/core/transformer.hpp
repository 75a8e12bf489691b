#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <variant>
#include <vector>

#include "core/numerics.hpp"

namespace lrp4rag {

using TokenId = std::int32_t;
using TokenSequence = std::vector<TokenId>;

// Placeholder ids inside a prompt template.
inline constexpr TokenId kContextMarker = -1;
inline constexpr TokenId kQuestionMarker = -2;

struct TransformerConfig {
  std::size_t vocab_size = 64;
  std::size_t d_model = 32;
  std::size_t n_heads = 2;
  std::size_t n_layers = 2;
  std::size_t d_ff = 64;
  std::size_t max_seq_len = 128;
  double ln_eps = 1e-5;

  std::size_t d_head() const { return d_model / n_heads; }
  void validate() const;
  friend bool operator==(const TransformerConfig&, const TransformerConfig&) = default;
};

struct TransformerLayer {
  std::vector<double> ln1_gain, ln1_bias;
  Matrix w_q, w_k, w_v, w_o;  // d_model x d_model
  Matrix b_q, b_k, b_v, b_o;  // 1 x d_model
  std::vector<double> ln2_gain, ln2_bias;
  Matrix w_ff1;  // d_model x d_ff
  Matrix b_ff1;  // 1 x d_ff
  Matrix w_ff2;  // d_ff x d_model
  Matrix b_ff2;  // 1 x d_model

  friend bool operator==(const TransformerLayer&, const TransformerLayer&) = default;
};

struct InitOptions {
  double embedding_std = 1.0;
  // Output head initialised as the transposed token embedding.
  bool tie_head = false;
};

struct TransformerParams {
  TransformerConfig config;
  Matrix token_embedding;     // vocab x d_model
  Matrix position_embedding;  // max_seq_len x d_model
  std::vector<TransformerLayer> layers;
  std::vector<double> final_ln_gain, final_ln_bias;
  Matrix head;  // d_model x vocab

  static TransformerParams zeros(const TransformerConfig& config);
  static TransformerParams random(const TransformerConfig& config, std::uint64_t seed,
                                  const InitOptions& options = {});
  void validate() const;

  friend bool operator==(const TransformerParams&, const TransformerParams&) = default;
};

// "RPTW" parameter file.
void save_params(const TransformerParams& params, const std::filesystem::path& path);
TransformerParams load_params(const std::filesystem::path& path);

// --- prompt assembly -------------------------------------------------------

enum class PromptSegment : std::uint8_t { kTemplate, kContext, kQuestion };

struct PromptParts {
  TokenSequence context;
  TokenSequence question;
  TokenSequence templ;  // holds exactly one kContextMarker and one kQuestionMarker
};

struct AssembledPrompt {
  TokenSequence tokens;
  std::vector<PromptSegment> segments;  // origin of each position
};

AssembledPrompt assemble_prompt(const PromptParts& parts);

// --- forward trace ---------------------------------------------------------

using ValueId = std::size_t;

struct EmbedEntry {
  TokenSequence tokens;
  const Matrix* token_embedding;
  const Matrix* position_embedding;
  ValueId output;
};

// output = input * weight (+ bias broadcast over rows)
struct LinearEntry {
  ValueId input;
  const Matrix* weight;
  const Matrix* bias;  // nullable
  ValueId output;
};

// output = lhs * rhs
struct MatMulEntry {
  ValueId lhs;
  ValueId rhs;
  ValueId output;
};

// Unary ops read inputs[0]; Add sums every input.
struct NonParamEntry {
  OpKind kind;
  std::vector<ValueId> inputs;
  ValueId output;
};

// Index-only rearrangements (head split/merge, transpose, row pick). They carry
// no arithmetic, so relevance is routed back unchanged.
namespace view {
struct Transpose {};
struct SliceCols {
  std::size_t offset;
  std::size_t width;
};
struct ConcatCols {};
struct SelectRow {
  std::size_t row;
};
}  // namespace view

using ViewKind = std::variant<view::Transpose, view::SliceCols, view::ConcatCols, view::SelectRow>;

struct ViewEntry {
  ViewKind kind;
  std::vector<ValueId> inputs;
  ValueId output;
};

using TraceEntry = std::variant<EmbedEntry, LinearEntry, MatMulEntry, NonParamEntry, ViewEntry>;

// Borrowed pointers inside entries refer to the TransformerParams the trace was
// produced from; those parameters must outlive the trace.
struct ForwardTrace {
  std::vector<Matrix> values;
  std::vector<bool> is_constant;  // constant inputs (causal mask) have no producer
  std::vector<TraceEntry> entries;
  std::vector<double> logits;  // last position, length vocab_size
  std::size_t seq_len = 0;

  ValueId add_value(Matrix m, bool constant = false);
  ValueId head_output() const;
};

ValueId entry_output(const TraceEntry& entry);
std::vector<ValueId> entry_inputs(const TraceEntry& entry);

// Recomputes `entry`'s output from the recorded values of its inputs.
Matrix replay_entry(const ForwardTrace& trace, const TraceEntry& entry);
double replay_max_error(const ForwardTrace& trace);

// Throws kGraph when entries are not topologically ordered or shapes disagree.
void check_trace(const ForwardTrace& trace);

ForwardTrace forward_step(std::span<const TokenId> tokens, const TransformerParams& params);

// Lowest id wins ties.
TokenId argmax_token(std::span<const double> logits);

struct Generation {
  TokenSequence response;
  std::vector<ForwardTrace> traces;  // traces[t] covers prompt + response[0..t)
};

Generation greedy_decode(std::span<const TokenId> prompt, const TransformerParams& params,
                         std::size_t max_new, TokenId stop_token);

// Traces for a fixed response, one per response token.
Generation teacher_forced(std::span<const TokenId> prompt, std::span<const TokenId> response,
                          const TransformerParams& params);

}  // namespace lrp4rag

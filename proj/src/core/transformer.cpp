#include "core/transformer.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "core/binio.hpp"
#include "core/error.hpp"

namespace lrp4rag {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

constexpr double kMaskedScore = -1e9;
constexpr std::uint32_t kParamsVersion = 1;

}  // namespace

void TransformerConfig::validate() const {
  if (vocab_size < 1 || d_model < 1 || n_heads < 1 || n_layers < 1 || d_ff < 1 || max_seq_len < 1) {
    fail(ErrorKind::kConfig, "transformer config counts must all be >= 1");
  }
  if (d_model % n_heads != 0) fail(ErrorKind::kConfig, "d_model must be divisible by n_heads");
  if (!(ln_eps > 0.0) || !std::isfinite(ln_eps)) fail(ErrorKind::kConfig, "ln_eps must be > 0");
}

TransformerParams TransformerParams::zeros(const TransformerConfig& config) {
  config.validate();
  const std::size_t d = config.d_model;
  TransformerParams p;
  p.config = config;
  p.token_embedding = Matrix(config.vocab_size, d);
  p.position_embedding = Matrix(config.max_seq_len, d);
  p.layers.resize(config.n_layers);
  for (auto& l : p.layers) {
    l.ln1_gain.assign(d, 0.0);
    l.ln1_bias.assign(d, 0.0);
    l.ln2_gain.assign(d, 0.0);
    l.ln2_bias.assign(d, 0.0);
    l.w_q = l.w_k = l.w_v = l.w_o = Matrix(d, d);
    l.b_q = l.b_k = l.b_v = l.b_o = Matrix(1, d);
    l.w_ff1 = Matrix(d, config.d_ff);
    l.b_ff1 = Matrix(1, config.d_ff);
    l.w_ff2 = Matrix(config.d_ff, d);
    l.b_ff2 = Matrix(1, d);
  }
  p.final_ln_gain.assign(d, 0.0);
  p.final_ln_bias.assign(d, 0.0);
  p.head = Matrix(d, config.vocab_size);
  return p;
}

TransformerParams TransformerParams::random(const TransformerConfig& config, std::uint64_t seed,
                                            const InitOptions& options) {
  TransformerParams p = zeros(config);
  std::mt19937_64 rng(seed);
  auto fill = [&rng](Matrix& m, double stddev) {
    std::normal_distribution<double> dist(0.0, stddev);
    for (double& v : m.values()) v = dist(rng);
  };
  const double d = static_cast<double>(config.d_model);
  fill(p.token_embedding, options.embedding_std);
  fill(p.position_embedding, options.embedding_std * 0.1);
  for (auto& l : p.layers) {
    l.ln1_gain.assign(config.d_model, 1.0);
    l.ln2_gain.assign(config.d_model, 1.0);
    fill(l.w_q, 1.0 / std::sqrt(d));
    fill(l.w_k, 1.0 / std::sqrt(d));
    fill(l.w_v, 1.0 / std::sqrt(d));
    fill(l.w_o, 1.0 / std::sqrt(d));
    fill(l.w_ff1, 1.0 / std::sqrt(d));
    fill(l.w_ff2, 1.0 / std::sqrt(static_cast<double>(config.d_ff)));
  }
  p.final_ln_gain.assign(config.d_model, 1.0);
  if (options.tie_head) {
    p.head = transpose(p.token_embedding);
  } else {
    fill(p.head, 1.0 / std::sqrt(d));
  }
  return p;
}

void TransformerParams::validate() const {
  config.validate();
  const std::size_t d = config.d_model;
  auto expect = [](const Matrix& m, std::size_t r, std::size_t c, const char* name) {
    if (m.rows() != r || m.cols() != c) {
      fail(ErrorKind::kShape, std::string(name) + " has shape " + m.shape_string() + ", expected " +
                                  std::to_string(r) + "x" + std::to_string(c));
    }
    if (!m.all_finite()) fail(ErrorKind::kFormat, std::string(name) + " has non-finite entries");
  };
  auto expect_vec = [](const std::vector<double>& v, std::size_t n, const char* name) {
    if (v.size() != n) fail(ErrorKind::kShape, std::string(name) + " has wrong length");
    if (!std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); })) {
      fail(ErrorKind::kFormat, std::string(name) + " has non-finite entries");
    }
  };
  expect(token_embedding, config.vocab_size, d, "token_embedding");
  expect(position_embedding, config.max_seq_len, d, "position_embedding");
  if (layers.size() != config.n_layers) fail(ErrorKind::kShape, "layer count mismatch");
  for (const auto& l : layers) {
    expect_vec(l.ln1_gain, d, "ln1_gain");
    expect_vec(l.ln1_bias, d, "ln1_bias");
    expect_vec(l.ln2_gain, d, "ln2_gain");
    expect_vec(l.ln2_bias, d, "ln2_bias");
    expect(l.w_q, d, d, "w_q");
    expect(l.w_k, d, d, "w_k");
    expect(l.w_v, d, d, "w_v");
    expect(l.w_o, d, d, "w_o");
    expect(l.b_q, 1, d, "b_q");
    expect(l.b_k, 1, d, "b_k");
    expect(l.b_v, 1, d, "b_v");
    expect(l.b_o, 1, d, "b_o");
    expect(l.w_ff1, d, config.d_ff, "w_ff1");
    expect(l.b_ff1, 1, config.d_ff, "b_ff1");
    expect(l.w_ff2, config.d_ff, d, "w_ff2");
    expect(l.b_ff2, 1, d, "b_ff2");
  }
  expect_vec(final_ln_gain, d, "final_ln_gain");
  expect_vec(final_ln_bias, d, "final_ln_bias");
  expect(head, d, config.vocab_size, "head");
}

// Matrices in declared order; shared by save and load so the two cannot drift.
namespace {
template <class Params, class MatFn, class VecFn>
void visit_params(Params& p, MatFn&& mat, VecFn&& vec) {
  mat(p.token_embedding);
  mat(p.position_embedding);
  for (auto& l : p.layers) {
    vec(l.ln1_gain);
    vec(l.ln1_bias);
    mat(l.w_q);
    mat(l.b_q);
    mat(l.w_k);
    mat(l.b_k);
    mat(l.w_v);
    mat(l.b_v);
    mat(l.w_o);
    mat(l.b_o);
    vec(l.ln2_gain);
    vec(l.ln2_bias);
    mat(l.w_ff1);
    mat(l.b_ff1);
    mat(l.w_ff2);
    mat(l.b_ff2);
  }
  vec(p.final_ln_gain);
  vec(p.final_ln_bias);
  mat(p.head);
}
}  // namespace

void save_params(const TransformerParams& params, const std::filesystem::path& path) {
  params.validate();
  binio::Writer w;
  w.magic("RPTW");
  w.u32(kParamsVersion);
  const auto& c = params.config;
  w.u64(c.vocab_size);
  w.u64(c.d_model);
  w.u64(c.n_heads);
  w.u64(c.n_layers);
  w.u64(c.d_ff);
  w.u64(c.max_seq_len);
  w.f64(c.ln_eps);
  visit_params(
      params, [&](const Matrix& m) { w.f64s(m.storage()); },
      [&](const std::vector<double>& v) { w.f64s(v); });
  w.save(path);
}

TransformerParams load_params(const std::filesystem::path& path) {
  auto r = binio::Reader::open(path);
  r.expect_magic("RPTW");
  const auto version = r.u32();
  if (version != kParamsVersion) {
    fail(ErrorKind::kFormat, path.string() + ": unsupported parameter version " + std::to_string(version));
  }
  TransformerConfig c;
  c.vocab_size = r.u64();
  c.d_model = r.u64();
  c.n_heads = r.u64();
  c.n_layers = r.u64();
  c.d_ff = r.u64();
  c.max_seq_len = r.u64();
  c.ln_eps = r.f64();
  try {
    c.validate();
  } catch (const Error& e) {
    fail(ErrorKind::kFormat, path.string() + ": " + e.what());
  }
  TransformerParams p = TransformerParams::zeros(c);
  visit_params(
      p, [&](Matrix& m) { m = Matrix(m.rows(), m.cols(), r.f64s(m.size())); },
      [&](std::vector<double>& v) { v = r.f64s(v.size()); });
  r.expect_end();
  p.validate();
  return p;
}

// ---------------------------------------------------------------------------

AssembledPrompt assemble_prompt(const PromptParts& parts) {
  const auto count = [&](TokenId marker) {
    return std::count(parts.templ.begin(), parts.templ.end(), marker);
  };
  if (count(kContextMarker) != 1) fail(ErrorKind::kFormat, "template needs exactly one context placeholder");
  if (count(kQuestionMarker) != 1) fail(ErrorKind::kFormat, "template needs exactly one question placeholder");
  for (const auto* seq : {&parts.context, &parts.question}) {
    if (std::any_of(seq->begin(), seq->end(), [](TokenId t) { return t < 0; })) {
      fail(ErrorKind::kFormat, "context/question tokens must be non-negative ids");
    }
  }
  AssembledPrompt out;
  auto splice = [&](const TokenSequence& seq, PromptSegment seg) {
    out.tokens.insert(out.tokens.end(), seq.begin(), seq.end());
    out.segments.insert(out.segments.end(), seq.size(), seg);
  };
  for (TokenId t : parts.templ) {
    if (t == kContextMarker) {
      splice(parts.context, PromptSegment::kContext);
    } else if (t == kQuestionMarker) {
      splice(parts.question, PromptSegment::kQuestion);
    } else {
      if (t < 0) fail(ErrorKind::kFormat, "unknown negative template token " + std::to_string(t));
      out.tokens.push_back(t);
      out.segments.push_back(PromptSegment::kTemplate);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

ValueId ForwardTrace::add_value(Matrix m, bool constant) {
  values.push_back(std::move(m));
  is_constant.push_back(constant);
  return values.size() - 1;
}

ValueId ForwardTrace::head_output() const {
  if (entries.empty()) fail(ErrorKind::kGraph, "empty trace");
  return entry_output(entries.back());
}

ValueId entry_output(const TraceEntry& entry) {
  return std::visit([](const auto& e) { return e.output; }, entry);
}

std::vector<ValueId> entry_inputs(const TraceEntry& entry) {
  return std::visit(overloaded{
                        [](const EmbedEntry&) { return std::vector<ValueId>{}; },
                        [](const LinearEntry& e) { return std::vector<ValueId>{e.input}; },
                        [](const MatMulEntry& e) { return std::vector<ValueId>{e.lhs, e.rhs}; },
                        [](const NonParamEntry& e) { return e.inputs; },
                        [](const ViewEntry& e) { return e.inputs; },
                    },
                    entry);
}

namespace {

Matrix apply_view(const ViewKind& kind, const std::vector<const Matrix*>& in) {
  return std::visit(
      overloaded{
          [&](const view::Transpose&) { return transpose(*in.at(0)); },
          [&](const view::SliceCols& s) {
            const Matrix& m = *in.at(0);
            if (s.offset + s.width > m.cols()) fail(ErrorKind::kShape, "column slice out of range");
            Matrix out(m.rows(), s.width);
            for (std::size_t r = 0; r < m.rows(); ++r)
              for (std::size_t c = 0; c < s.width; ++c) out(r, c) = m(r, s.offset + c);
            return out;
          },
          [&](const view::ConcatCols&) {
            if (in.empty()) fail(ErrorKind::kShape, "concat of nothing");
            std::size_t width = 0;
            for (const auto* m : in) {
              if (m->rows() != in.front()->rows()) fail(ErrorKind::kShape, "concat row mismatch");
              width += m->cols();
            }
            Matrix out(in.front()->rows(), width);
            std::size_t offset = 0;
            for (const auto* m : in) {
              for (std::size_t r = 0; r < m->rows(); ++r)
                for (std::size_t c = 0; c < m->cols(); ++c) out(r, offset + c) = (*m)(r, c);
              offset += m->cols();
            }
            return out;
          },
          [&](const view::SelectRow& s) {
            const Matrix& m = *in.at(0);
            if (s.row >= m.rows()) fail(ErrorKind::kShape, "row pick out of range");
            return Matrix::row_vector(m.row(s.row));
          },
      },
      kind);
}

Matrix embed(const EmbedEntry& e) {
  const Matrix& tok = *e.token_embedding;
  const Matrix& pos = *e.position_embedding;
  Matrix out(e.tokens.size(), tok.cols());
  for (std::size_t i = 0; i < e.tokens.size(); ++i) {
    const auto id = e.tokens[i];
    if (id < 0 || static_cast<std::size_t>(id) >= tok.rows()) {
      fail(ErrorKind::kFormat, "token id " + std::to_string(id) + " outside vocabulary");
    }
    for (std::size_t c = 0; c < tok.cols(); ++c) out(i, c) = tok(id, c) + pos(i, c);
  }
  return out;
}

}  // namespace

Matrix replay_entry(const ForwardTrace& trace, const TraceEntry& entry) {
  const auto& vals = trace.values;
  return std::visit(overloaded{
                        [&](const EmbedEntry& e) { return embed(e); },
                        [&](const LinearEntry& e) {
                          Matrix out = matmul(vals.at(e.input), *e.weight);
                          if (e.bias != nullptr) {
                            for (std::size_t r = 0; r < out.rows(); ++r)
                              for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += (*e.bias)(0, c);
                          }
                          return out;
                        },
                        [&](const MatMulEntry& e) { return matmul(vals.at(e.lhs), vals.at(e.rhs)); },
                        [&](const NonParamEntry& e) {
                          if (std::holds_alternative<op::Add>(e.kind)) {
                            std::vector<const Matrix*> branches;
                            for (auto id : e.inputs) branches.push_back(&vals.at(id));
                            return apply_add(branches);
                          }
                          return lrp4rag::apply(e.kind, vals.at(e.inputs.at(0)));
                        },
                        [&](const ViewEntry& e) {
                          std::vector<const Matrix*> in;
                          for (auto id : e.inputs) in.push_back(&vals.at(id));
                          return apply_view(e.kind, in);
                        },
                    },
                    entry);
}

double replay_max_error(const ForwardTrace& trace) {
  double worst = 0.0;
  for (const auto& entry : trace.entries) {
    worst = std::max(worst, max_abs_diff(replay_entry(trace, entry), trace.values.at(entry_output(entry))));
  }
  return worst;
}

void check_trace(const ForwardTrace& trace) {
  if (trace.values.size() != trace.is_constant.size()) fail(ErrorKind::kGraph, "value bookkeeping mismatch");
  std::vector<bool> produced = trace.is_constant;
  for (std::size_t i = 0; i < trace.entries.size(); ++i) {
    const auto& entry = trace.entries[i];
    for (auto in : entry_inputs(entry)) {
      if (in >= produced.size() || !produced[in]) {
        fail(ErrorKind::kGraph, "entry " + std::to_string(i) + " reads a value not yet produced");
      }
    }
    const auto out = entry_output(entry);
    if (out >= produced.size() || produced[out]) {
      fail(ErrorKind::kGraph, "entry " + std::to_string(i) + " output produced twice or missing");
    }
    const Matrix expected = replay_entry(trace, entry);
    const Matrix& recorded = trace.values[out];
    if (expected.rows() != recorded.rows() || expected.cols() != recorded.cols()) {
      fail(ErrorKind::kGraph, "entry " + std::to_string(i) + " recorded shape disagrees");
    }
    produced[out] = true;
  }
}

// ---------------------------------------------------------------------------

namespace {

// Appends entries and computes their outputs through the same code path the
// replay check uses.
class Recorder {
 public:
  explicit Recorder(ForwardTrace& trace) : trace_(trace) {}

  template <class Entry>
  ValueId record(Entry entry) {
    entry.output = trace_.values.size();
    TraceEntry te = std::move(entry);
    Matrix out = replay_entry(trace_, te);
    trace_.add_value(std::move(out));
    trace_.entries.push_back(std::move(te));
    return trace_.values.size() - 1;
  }

  ValueId linear(ValueId in, const Matrix& w, const Matrix* b) { return record(LinearEntry{in, &w, b, 0}); }
  ValueId op(OpKind kind, std::vector<ValueId> inputs) {
    return record(NonParamEntry{std::move(kind), std::move(inputs), 0});
  }
  ValueId view(ViewKind kind, std::vector<ValueId> inputs) {
    return record(ViewEntry{kind, std::move(inputs), 0});
  }
  ValueId matmul(ValueId a, ValueId b) { return record(MatMulEntry{a, b, 0}); }

 private:
  ForwardTrace& trace_;
};

op::LayerNorm layer_norm(double eps, const std::vector<double>& gain, const std::vector<double>& bias) {
  return op::LayerNorm{eps, gain, bias};
}

}  // namespace

ForwardTrace forward_step(std::span<const TokenId> tokens, const TransformerParams& params) {
  const auto& cfg = params.config;
  if (tokens.empty()) fail(ErrorKind::kShape, "forward step needs at least one token");
  if (tokens.size() > cfg.max_seq_len) {
    fail(ErrorKind::kCapacity, "sequence length " + std::to_string(tokens.size()) + " exceeds max_seq_len " +
                                   std::to_string(cfg.max_seq_len));
  }
  const std::size_t n = tokens.size();
  const std::size_t dh = cfg.d_head();

  ForwardTrace trace;
  trace.seq_len = n;
  Recorder rec(trace);

  ValueId x = rec.record(EmbedEntry{TokenSequence(tokens.begin(), tokens.end()), &params.token_embedding,
                                    &params.position_embedding, 0});

  Matrix mask(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) mask(i, j) = kMaskedScore;
  const ValueId mask_id = trace.add_value(std::move(mask), /*constant=*/true);

  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
  for (const auto& layer : params.layers) {
    const ValueId h = rec.op(layer_norm(cfg.ln_eps, layer.ln1_gain, layer.ln1_bias), {x});
    const ValueId q = rec.linear(h, layer.w_q, &layer.b_q);
    const ValueId k = rec.linear(h, layer.w_k, &layer.b_k);
    const ValueId v = rec.linear(h, layer.w_v, &layer.b_v);
    std::vector<ValueId> heads;
    for (std::size_t hd = 0; hd < cfg.n_heads; ++hd) {
      const view::SliceCols slice{hd * dh, dh};
      const ValueId qh = rec.view(slice, {q});
      const ValueId kh = rec.view(slice, {k});
      const ValueId vh = rec.view(slice, {v});
      const ValueId kt = rec.view(view::Transpose{}, {kh});
      const ValueId scores = rec.matmul(qh, kt);
      const ValueId scaled_scores = rec.op(op::Scale{inv_sqrt_dh}, {scores});
      const ValueId masked = rec.op(op::Add{}, {scaled_scores, mask_id});
      const ValueId probs = rec.op(op::Softmax{}, {masked});
      heads.push_back(rec.matmul(probs, vh));
    }
    const ValueId merged = rec.view(view::ConcatCols{}, heads);
    const ValueId attn = rec.linear(merged, layer.w_o, &layer.b_o);
    const ValueId x1 = rec.op(op::Add{}, {x, attn});
    const ValueId h2 = rec.op(layer_norm(cfg.ln_eps, layer.ln2_gain, layer.ln2_bias), {x1});
    const ValueId f1 = rec.linear(h2, layer.w_ff1, &layer.b_ff1);
    const ValueId act = rec.op(op::Tanh{}, {f1});
    const ValueId f2 = rec.linear(act, layer.w_ff2, &layer.b_ff2);
    x = rec.op(op::Add{}, {x1, f2});
  }
  const ValueId hf = rec.op(layer_norm(cfg.ln_eps, params.final_ln_gain, params.final_ln_bias), {x});
  const ValueId last = rec.view(view::SelectRow{n - 1}, {hf});
  const ValueId logits = rec.linear(last, params.head, nullptr);
  const auto row = trace.values[logits].row(0);
  trace.logits.assign(row.begin(), row.end());
  return trace;
}

TokenId argmax_token(std::span<const double> logits) {
  if (logits.empty()) fail(ErrorKind::kShape, "argmax of empty logits");
  std::size_t best = 0;
  for (std::size_t i = 1; i < logits.size(); ++i) {
    if (logits[i] > logits[best]) best = i;
  }
  return static_cast<TokenId>(best);
}

Generation greedy_decode(std::span<const TokenId> prompt, const TransformerParams& params, std::size_t max_new,
                         TokenId stop_token) {
  if (max_new < 1) fail(ErrorKind::kConfig, "max_new must be >= 1");
  Generation gen;
  TokenSequence seq(prompt.begin(), prompt.end());
  for (std::size_t step = 0; step < max_new; ++step) {
    ForwardTrace trace = forward_step(seq, params);
    const TokenId next = argmax_token(trace.logits);
    gen.traces.push_back(std::move(trace));
    gen.response.push_back(next);
    seq.push_back(next);
    if (next == stop_token) break;
  }
  return gen;
}

Generation teacher_forced(std::span<const TokenId> prompt, std::span<const TokenId> response,
                          const TransformerParams& params) {
  if (response.empty()) fail(ErrorKind::kShape, "forced response is empty");
  Generation gen;
  TokenSequence seq(prompt.begin(), prompt.end());
  for (TokenId t : response) {
    gen.traces.push_back(forward_step(seq, params));
    gen.response.push_back(t);
    seq.push_back(t);
  }
  return gen;
}

}  // namespace lrp4rag

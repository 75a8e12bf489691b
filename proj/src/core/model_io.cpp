#include "core/model_io.hpp"

#include "core/binio.hpp"
#include "core/error.hpp"

namespace lrp4rag {

namespace {

constexpr std::uint32_t kVersion = 1;

enum class Kind : std::uint32_t { kThreshold = 1, kSvm = 2, kMlp = 3, kLstm = 4 };

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

void put_matrix(binio::Writer& w, const Matrix& m) {
  w.u64(m.rows());
  w.u64(m.cols());
  w.f64s(m.storage());
}

Matrix get_matrix(binio::Reader& r) {
  const auto rows = r.u64();
  const auto cols = r.u64();
  if (cols != 0 && rows > r.remaining() / sizeof(double) / cols) fail(ErrorKind::kFormat, r.source() + ": matrix too large");
  return Matrix(rows, cols, r.f64s(rows * cols));
}

void put_vec(binio::Writer& w, const std::vector<double>& v) {
  w.u64(v.size());
  w.f64s(v);
}

std::vector<double> get_vec(binio::Reader& r) {
  const auto n = r.u64();
  if (n > r.remaining() / sizeof(double)) fail(ErrorKind::kFormat, r.source() + ": vector too large");
  return r.f64s(n);
}

}  // namespace

void save_model(const ClassifierModel& model, const std::filesystem::path& path) {
  binio::Writer w;
  w.magic("RPCM");
  w.u32(kVersion);
  std::visit(overloaded{
                 [&](const ThresholdModel& m) {
                   w.u32(static_cast<std::uint32_t>(Kind::kThreshold));
                   w.f64(m.threshold);
                 },
                 [&](const SvmModel& m) {
                   w.u32(static_cast<std::uint32_t>(Kind::kSvm));
                   w.f64(m.gamma);
                   w.f64(m.c);
                   w.f64(m.bias);
                   put_matrix(w, m.support_vectors);
                   put_vec(w, m.coef);
                 },
                 [&](const MlpModel& m) {
                   w.u32(static_cast<std::uint32_t>(Kind::kMlp));
                   w.u64(m.w1.rows());
                   w.u64(m.b1.size());
                   w.f64s(m.w1.storage());
                   w.f64s(m.b1);
                   w.f64s(m.w2);
                   w.f64(m.b2);
                 },
                 [&](const LstmModel& m) {
                   w.u32(static_cast<std::uint32_t>(Kind::kLstm));
                   w.u64(m.input_dim);
                   w.u64(m.hidden);
                   w.u64(m.layers.size());
                   for (const auto& l : m.layers) {
                     w.f64s(l.w.storage());
                     w.f64s(l.b);
                   }
                   w.f64s(m.head_w);
                   w.f64(m.head_b);
                 },
             },
             model);
  w.save(path);
}

ClassifierModel load_model(const std::filesystem::path& path) {
  auto r = binio::Reader::open(path);
  r.expect_magic("RPCM");
  if (r.u32() != kVersion) fail(ErrorKind::kFormat, path.string() + ": unsupported model version");
  const auto kind = static_cast<Kind>(r.u32());
  ClassifierModel out;
  switch (kind) {
    case Kind::kThreshold:
      out = ThresholdModel{r.f64()};
      break;
    case Kind::kSvm: {
      SvmModel m;
      m.gamma = r.f64();
      m.c = r.f64();
      m.bias = r.f64();
      m.support_vectors = get_matrix(r);
      m.coef = get_vec(r);
      if (m.coef.size() != m.support_vectors.rows()) fail(ErrorKind::kFormat, path.string() + ": SVM coefficient count");
      out = std::move(m);
      break;
    }
    case Kind::kMlp: {
      const auto d = r.u64();
      const auto h = r.u64();
      if (d == 0 || h == 0 || d * h > r.remaining() / sizeof(double)) fail(ErrorKind::kFormat, path.string() + ": MLP shape");
      MlpModel m;
      m.w1 = Matrix(d, h, r.f64s(d * h));
      m.b1 = r.f64s(h);
      m.w2 = r.f64s(h);
      m.b2 = r.f64();
      out = std::move(m);
      break;
    }
    case Kind::kLstm: {
      LstmModel m;
      m.input_dim = r.u64();
      m.hidden = r.u64();
      const auto layers = r.u64();
      if (m.input_dim == 0 || m.hidden == 0 || layers == 0 || layers > 64) fail(ErrorKind::kFormat, path.string() + ": LSTM shape");
      for (std::uint64_t l = 0; l < layers; ++l) {
        const std::size_t in = (l == 0 ? m.input_dim : m.hidden) + m.hidden;
        if (4 * m.hidden * in > r.remaining() / sizeof(double)) fail(ErrorKind::kFormat, path.string() + ": truncated LSTM");
        LstmLayer layer;
        layer.w = Matrix(4 * m.hidden, in, r.f64s(4 * m.hidden * in));
        layer.b = r.f64s(4 * m.hidden);
        m.layers.push_back(std::move(layer));
      }
      m.head_w = r.f64s(m.hidden);
      m.head_b = r.f64();
      out = std::move(m);
      break;
    }
    default:
      fail(ErrorKind::kFormat, path.string() + ": unknown model kind " + std::to_string(static_cast<std::uint32_t>(kind)));
  }
  r.expect_end();
  return out;
}

}  // namespace lrp4rag

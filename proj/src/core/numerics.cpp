#include "core/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "core/error.hpp"

namespace lrp4rag {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    fail(ErrorKind::kShape, "matrix data length " + std::to_string(data_.size()) +
                                " does not match " + shape_string());
  }
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) fail(ErrorKind::kShape, "ragged matrix literal");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Matrix(r, c, std::move(data));
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::row_vector(std::span<const double> values) {
  return Matrix(1, values.size(), std::vector<double>(values.begin(), values.end()));
}

bool Matrix::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

std::string Matrix::shape_string() const {
  std::ostringstream os;
  os << rows_ << "x" << cols_;
  return os.str();
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    fail(ErrorKind::kShape, "matmul " + a.shape_string() + " * " + b.shape_string());
  }
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto out = c.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      auto brow = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) out[j] += aik * brow[j];
    }
  }
  return c;
}

Matrix transpose(const Matrix& m) {
  Matrix t(m.cols(), m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) t(j, i) = m(i, j);
  return t;
}

namespace {
void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    fail(ErrorKind::kShape,
         std::string(what) + " " + a.shape_string() + " vs " + b.shape_string());
  }
}
}  // namespace

Matrix hadamard(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "hadamard");
  Matrix c(a.rows(), a.cols());
  auto cv = c.values();
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < cv.size(); ++i) cv[i] = av[i] * bv[i];
  return c;
}

Matrix add(const Matrix& a, const Matrix& b) {
  Matrix c = a;
  add_into(c, b);
  return c;
}

void add_into(Matrix& acc, const Matrix& m) {
  require_same_shape(acc, m, "add");
  auto av = acc.values();
  auto mv = m.values();
  for (std::size_t i = 0; i < av.size(); ++i) av[i] += mv[i];
}

Matrix scaled(const Matrix& m, double c) {
  Matrix out = m;
  for (double& v : out.values()) v *= c;
  return out;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "max_abs_diff");
  double worst = 0.0;
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < av.size(); ++i) worst = std::max(worst, std::abs(av[i] - bv[i]));
  return worst;
}

// ---------------------------------------------------------------------------

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

void softmax_row(std::span<const double> x, std::span<double> y) {
  const double mx = *std::max_element(x.begin(), x.end());
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    y[i] = std::exp(x[i] - mx);
    total += y[i];
  }
  for (double& v : y) v /= total;
}

struct RowMoments {
  double mean;
  double inv_std;
};

RowMoments moments(std::span<const double> x, double eps) {
  const double n = static_cast<double>(x.size());
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= n;
  return {mean, 1.0 / std::sqrt(var + eps)};
}

double gain_at(const op::LayerNorm& ln, std::size_t i) { return ln.gain.empty() ? 1.0 : ln.gain[i]; }
double bias_at(const op::LayerNorm& ln, std::size_t i) { return ln.bias.empty() ? 0.0 : ln.bias[i]; }

void check_layernorm_width(const op::LayerNorm& ln, std::size_t width) {
  if ((!ln.gain.empty() && ln.gain.size() != width) ||
      (!ln.bias.empty() && ln.bias.size() != width)) {
    fail(ErrorKind::kShape, "layernorm parameters do not match row width " + std::to_string(width));
  }
}

void layernorm_row(const op::LayerNorm& ln, std::span<const double> x, std::span<double> y) {
  const auto [mean, inv_std] = moments(x, ln.eps);
  for (std::size_t i = 0; i < x.size(); ++i) {
    y[i] = (x[i] - mean) * inv_std * gain_at(ln, i) + bias_at(ln, i);
  }
}

}  // namespace

std::string op_name(const OpKind& kind) {
  return std::visit(overloaded{
                        [](const op::Softmax&) { return std::string("softmax"); },
                        [](const op::LayerNorm&) { return std::string("layernorm"); },
                        [](const op::Sigmoid&) { return std::string("sigmoid"); },
                        [](const op::Relu&) { return std::string("relu"); },
                        [](const op::Tanh&) { return std::string("tanh"); },
                        [](const op::Scale&) { return std::string("scale"); },
                        [](const op::Add&) { return std::string("add"); },
                    },
                    kind);
}

void validate(const OpKind& kind) {
  if (const auto* ln = std::get_if<op::LayerNorm>(&kind)) {
    if (!(ln->eps >= 0.0) || !std::isfinite(ln->eps)) fail(ErrorKind::kConfig, "layernorm eps must be >= 0");
  }
  if (const auto* s = std::get_if<op::Scale>(&kind)) {
    if (!std::isfinite(s->factor)) fail(ErrorKind::kConfig, "scale factor must be finite");
  }
}

Matrix apply(const OpKind& kind, const Matrix& x) {
  validate(kind);
  Matrix y(x.rows(), x.cols());
  auto elementwise = [&](auto&& f) {
    auto xv = x.values();
    auto yv = y.values();
    for (std::size_t i = 0; i < xv.size(); ++i) yv[i] = f(xv[i]);
  };
  std::visit(overloaded{
                 [&](const op::Softmax&) {
                   if (x.cols() == 0) return;
                   for (std::size_t r = 0; r < x.rows(); ++r) softmax_row(x.row(r), y.row(r));
                 },
                 [&](const op::LayerNorm& ln) {
                   check_layernorm_width(ln, x.cols());
                   if (x.cols() == 0) return;
                   for (std::size_t r = 0; r < x.rows(); ++r) layernorm_row(ln, x.row(r), y.row(r));
                 },
                 [&](const op::Sigmoid&) { elementwise(sigmoid); },
                 [&](const op::Relu&) { elementwise([](double v) { return v > 0.0 ? v : 0.0; }); },
                 [&](const op::Tanh&) { elementwise([](double v) { return std::tanh(v); }); },
                 [&](const op::Scale& s) { elementwise([c = s.factor](double v) { return c * v; }); },
                 [&](const op::Add&) { y = x; },
             },
             kind);
  return y;
}

Matrix apply_add(std::span<const Matrix* const> branches) {
  if (branches.empty()) fail(ErrorKind::kShape, "add needs at least one branch");
  Matrix sum = *branches.front();
  for (std::size_t i = 1; i < branches.size(); ++i) add_into(sum, *branches[i]);
  return sum;
}

bool has_diagonal_jacobian(const OpKind& kind) {
  return !std::holds_alternative<op::Softmax>(kind) && !std::holds_alternative<op::LayerNorm>(kind);
}

std::vector<double> diagonal_derivative(const OpKind& kind, std::span<const double> x) {
  std::vector<double> d(x.size());
  std::visit(overloaded{
                 [&](const op::Sigmoid&) {
                   for (std::size_t i = 0; i < x.size(); ++i) {
                     const double s = sigmoid(x[i]);
                     d[i] = s * (1.0 - s);
                   }
                 },
                 // Subgradient 0 at the kink.
                 [&](const op::Relu&) {
                   for (std::size_t i = 0; i < x.size(); ++i) d[i] = x[i] > 0.0 ? 1.0 : 0.0;
                 },
                 [&](const op::Tanh&) {
                   for (std::size_t i = 0; i < x.size(); ++i) {
                     const double t = std::tanh(x[i]);
                     d[i] = 1.0 - t * t;
                   }
                 },
                 [&](const op::Scale& s) { std::fill(d.begin(), d.end(), s.factor); },
                 [&](const op::Add&) { std::fill(d.begin(), d.end(), 1.0); },
                 [&](const auto&) {
                   fail(ErrorKind::kGraph, op_name(kind) + " has no diagonal Jacobian");
                 },
             },
             kind);
  return d;
}

Matrix jacobian(const OpKind& kind, std::span<const double> x) {
  validate(kind);
  const std::size_t n = x.size();
  Matrix j(n, n);
  if (has_diagonal_jacobian(kind)) {
    const auto d = diagonal_derivative(kind, x);
    for (std::size_t i = 0; i < n; ++i) j(i, i) = d[i];
    return j;
  }
  if (n == 0) return j;
  if (std::holds_alternative<op::Softmax>(kind)) {
    // diag(s) - s s^T
    std::vector<double> s(n);
    softmax_row(x, s);
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t b = 0; b < n; ++b) j(a, b) = (a == b ? s[a] : 0.0) - s[a] * s[b];
    return j;
  }
  const auto& ln = std::get<op::LayerNorm>(kind);
  check_layernorm_width(ln, n);
  // y_i = g_i * xhat_i + b_i,  d xhat_i / d x_j = inv_std * (delta_ij - 1/n - xhat_i xhat_j / n)
  const auto [mean, inv_std] = moments(x, ln.eps);
  const double nn = static_cast<double>(n);
  std::vector<double> xhat(n);
  for (std::size_t i = 0; i < n; ++i) xhat[i] = (x[i] - mean) * inv_std;
  for (std::size_t a = 0; a < n; ++a) {
    const double g = gain_at(ln, a);
    for (std::size_t b = 0; b < n; ++b) {
      j(a, b) = g * inv_std * ((a == b ? 1.0 : 0.0) - 1.0 / nn - xhat[a] * xhat[b] / nn);
    }
  }
  return j;
}

Matrix finite_diff_jacobian(const OpKind& kind, std::span<const double> x, double h) {
  if (!(h > 0.0)) fail(ErrorKind::kConfig, "finite difference step must be positive");
  const std::size_t n = x.size();
  Matrix j(n, n);
  Matrix plus = Matrix::row_vector(x);
  Matrix minus = plus;
  for (std::size_t col = 0; col < n; ++col) {
    plus(0, col) = x[col] + h;
    minus(0, col) = x[col] - h;
    const Matrix yp = lrp4rag::apply(kind, plus);
    const Matrix ym = lrp4rag::apply(kind, minus);
    for (std::size_t row = 0; row < n; ++row) j(row, col) = (yp(0, row) - ym(0, row)) / (2.0 * h);
    plus(0, col) = x[col];
    minus(0, col) = x[col];
  }
  return j;
}

}  // namespace lrp4rag

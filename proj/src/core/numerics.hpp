#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace lrp4rag {

// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Matrix identity(std::size_t n);
  static Matrix row_vector(std::span<const double> values);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  const std::vector<double>& storage() const noexcept { return data_; }

  bool all_finite() const noexcept;
  std::string shape_string() const;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& m);
Matrix hadamard(const Matrix& a, const Matrix& b);
Matrix add(const Matrix& a, const Matrix& b);
Matrix scaled(const Matrix& m, double c);
void add_into(Matrix& acc, const Matrix& m);
double max_abs_diff(const Matrix& a, const Matrix& b);

// Non-parameter operations whose Jacobians drive the relevance rule for
// layers without weights.
namespace op {
struct Softmax {};
struct LayerNorm {
  double eps = 1e-5;
  std::vector<double> gain;  // empty = all ones
  std::vector<double> bias;  // empty = all zeros
};
struct Sigmoid {};
struct Relu {};
struct Tanh {};
struct Scale {
  double factor = 1.0;
};
// Elementwise sum of branches; unary application is the identity.
struct Add {};
}  // namespace op

using OpKind = std::variant<op::Softmax, op::LayerNorm, op::Sigmoid, op::Relu,
                            op::Tanh, op::Scale, op::Add>;

std::string op_name(const OpKind& kind);
void validate(const OpKind& kind);

// Softmax and LayerNorm act per row; the rest are elementwise.
Matrix apply(const OpKind& kind, const Matrix& x);
Matrix apply_add(std::span<const Matrix* const> branches);

// Analytic dy/dx at one row x: J(i, j) = d y_i / d x_j.
Matrix jacobian(const OpKind& kind, std::span<const double> x);

// True for kinds whose Jacobian is diagonal; `diagonal_derivative` then
// returns the diagonal without materializing J.
bool has_diagonal_jacobian(const OpKind& kind);
std::vector<double> diagonal_derivative(const OpKind& kind, std::span<const double> x);

// Central-difference estimate of `jacobian`, column by column.
Matrix finite_diff_jacobian(const OpKind& kind, std::span<const double> x, double h);

}  // namespace lrp4rag

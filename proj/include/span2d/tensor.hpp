#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace span2d {

/// Dense row-major matrix of doubles. Vectors are 1×n (rows) or n×1 (columns).
class Tensor2 {
 public:
  Tensor2() = default;
  Tensor2(std::size_t rows, std::size_t cols, double fill = 0.0);
  Tensor2(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Tensor2 row_vector(std::span<const double> values);
  static Tensor2 column_vector(std::span<const double> values);
  static Tensor2 identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  void fill(double v);
  bool all_finite() const;
  std::string shape_string() const;

  friend bool operator==(const Tensor2&, const Tensor2&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Activations.
/// 0.5x·[1 + tanh(0.8x + 0.036x³)], the tanh-GELU variant with these exact coefficients.
double gelu_approx(double x);
double gelu_approx_grad(double x);
/// e^x / (e^x + e^-x), evaluated as logistic(2x).
double talu(double x);
double logistic(double x);

Tensor2 gelu_approx(const Tensor2& x);
Tensor2 talu(const Tensor2& x);
Tensor2 logistic(const Tensor2& x);

// Products. All throw std::invalid_argument naming both shapes on mismatch.
Tensor2 matmul(const Tensor2& a, const Tensor2& b);     // a·b
Tensor2 matmul_nt(const Tensor2& a, const Tensor2& b);  // a·bᵀ
Tensor2 matmul_tn(const Tensor2& a, const Tensor2& b);  // aᵀ·b
Tensor2 transpose(const Tensor2& a);

/// X·Wᵀ + b with b broadcast over rows. W is out×in; b is 1×out (or empty for no bias).
/// A 1×in W gives the d→1 compression as an l×1 column.
Tensor2 affine(const Tensor2& x, const Tensor2& w, const Tensor2& b);

void add_inplace(Tensor2& acc, const Tensor2& x, double scale = 1.0);

}  // namespace span2d

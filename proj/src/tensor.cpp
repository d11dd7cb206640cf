#include "span2d/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace span2d {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMajor>;
using MutMap = Eigen::Map<RowMajor>;

ConstMap view(const Tensor2& t) {
  return ConstMap(t.data().data(), static_cast<Eigen::Index>(t.rows()),
                  static_cast<Eigen::Index>(t.cols()));
}

MutMap view(Tensor2& t) {
  return MutMap(t.data().data(), static_cast<Eigen::Index>(t.rows()),
                static_cast<Eigen::Index>(t.cols()));
}

[[noreturn]] void shape_error(const char* op, const Tensor2& a, const Tensor2& b) {
  throw std::invalid_argument(std::string(op) + ": shape mismatch " + a.shape_string() +
                              " vs " + b.shape_string());
}

template <typename F>
Tensor2 map(const Tensor2& x, F f) {
  Tensor2 out(x.rows(), x.cols());
  auto src = x.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = f(src[i]);
  return out;
}

}  // namespace

Tensor2::Tensor2(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Tensor2::Tensor2(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    throw std::invalid_argument("Tensor2: data length " + std::to_string(data_.size()) +
                                " does not match " + std::to_string(rows) + "x" +
                                std::to_string(cols));
  }
}

Tensor2 Tensor2::row_vector(std::span<const double> values) {
  return {1, values.size(), std::vector<double>(values.begin(), values.end())};
}

Tensor2 Tensor2::column_vector(std::span<const double> values) {
  return {values.size(), 1, std::vector<double>(values.begin(), values.end())};
}

Tensor2 Tensor2::identity(std::size_t n) {
  Tensor2 out(n, n);
  for (std::size_t i = 0; i < n; ++i) out(i, i) = 1.0;
  return out;
}

void Tensor2::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor2::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

std::string Tensor2::shape_string() const {
  return "[" + std::to_string(rows_) + "x" + std::to_string(cols_) + "]";
}

double gelu_approx(double x) { return 0.5 * x * (1.0 + std::tanh(0.8 * x + 0.036 * x * x * x)); }

double gelu_approx_grad(double x) {
  const double t = std::tanh(0.8 * x + 0.036 * x * x * x);
  const double inner_grad = 0.8 + 0.108 * x * x;
  return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * inner_grad;
}

double logistic(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double z = std::exp(x);
  return z / (1.0 + z);
}

double talu(double x) { return logistic(2.0 * x); }

Tensor2 gelu_approx(const Tensor2& x) { return map(x, [](double v) { return gelu_approx(v); }); }
Tensor2 talu(const Tensor2& x) { return map(x, [](double v) { return talu(v); }); }
Tensor2 logistic(const Tensor2& x) { return map(x, [](double v) { return logistic(v); }); }

Tensor2 matmul(const Tensor2& a, const Tensor2& b) {
  if (a.cols() != b.rows()) shape_error("matmul", a, b);
  Tensor2 out(a.rows(), b.cols());
  if (a.cols() == 0) return out;
  view(out).noalias() = view(a) * view(b);
  return out;
}

Tensor2 matmul_nt(const Tensor2& a, const Tensor2& b) {
  if (a.cols() != b.cols()) shape_error("matmul_nt", a, b);
  Tensor2 out(a.rows(), b.rows());
  if (a.cols() == 0) return out;
  view(out).noalias() = view(a) * view(b).transpose();
  return out;
}

Tensor2 matmul_tn(const Tensor2& a, const Tensor2& b) {
  if (a.rows() != b.rows()) shape_error("matmul_tn", a, b);
  Tensor2 out(a.cols(), b.cols());
  if (a.rows() == 0) return out;
  view(out).noalias() = view(a).transpose() * view(b);
  return out;
}

Tensor2 transpose(const Tensor2& a) {
  Tensor2 out(a.cols(), a.rows());
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (std::size_t c = 0; c < a.cols(); ++c) out(c, r) = a(r, c);
  return out;
}

Tensor2 affine(const Tensor2& x, const Tensor2& w, const Tensor2& b) {
  if (x.cols() != w.cols()) shape_error("affine", x, w);
  if (!b.empty() && (b.rows() != 1 || b.cols() != w.rows())) shape_error("affine bias", w, b);
  Tensor2 out = matmul_nt(x, w);
  if (!b.empty()) {
    for (std::size_t r = 0; r < out.rows(); ++r) {
      auto row = out.row(r);
      for (std::size_t c = 0; c < row.size(); ++c) row[c] += b[c];
    }
  }
  return out;
}

void add_inplace(Tensor2& acc, const Tensor2& x, double scale) {
  if (acc.rows() != x.rows() || acc.cols() != x.cols()) shape_error("add", acc, x);
  auto dst = acc.data();
  auto src = x.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += scale * src[i];
}

}  // namespace span2d

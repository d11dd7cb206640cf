#include "fixtures.hpp"
#include "span2d/tensor.hpp"

#include <doctest.h>

#include <random>

using namespace span2d;
using namespace span2d::testing;

namespace {

Tensor2 random_tensor(std::size_t r, std::size_t c, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Tensor2 t(r, c);
  for (double& v : t.data()) v = u(rng);
  return t;
}

Tensor2 naive_matmul(const Tensor2& a, const Tensor2& b) {
  Tensor2 out(a.rows(), b.cols(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j)
      for (std::size_t k = 0; k < a.cols(); ++k) out(i, j) += a(i, k) * b(k, j);
  return out;
}

Tensor2 naive_transpose(const Tensor2& a) {
  Tensor2 t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

void check_close(const Tensor2& a, const Tensor2& b, double tol) {
  REQUIRE(a.rows() == b.rows());
  REQUIRE(a.cols() == b.cols());
  for (std::size_t k = 0; k < a.size(); ++k) CHECK(a[k] == doctest::Approx(b[k]).epsilon(tol));
}

}  // namespace

TEST_CASE("gelu approximation follows its tanh form") {
  for (double x = -6.0; x <= 6.0; x += 0.25) {
    const double expected = 0.5 * x * (1.0 + std::tanh(0.8 * x + 0.036 * x * x * x));
    CHECK(gelu_approx(x) == doctest::Approx(expected).epsilon(1e-15));
  }
  CHECK(gelu_approx(0.0) == 0.0);
}

TEST_CASE("gelu derivative matches central differences") {
  const double h = 1e-6;
  for (double x = -5.0; x <= 5.0; x += 0.37) {
    const double numeric = (gelu_approx(x + h) - gelu_approx(x - h)) / (2 * h);
    CHECK(gelu_approx_grad(x) == doctest::Approx(numeric).epsilon(1e-7));
  }
}

TEST_CASE("talu equals the exponential ratio and logistic of 2x") {
  for (double x = -15.0; x <= 15.0; x += 0.5) {
    CHECK(talu(x) == doctest::Approx(ref_talu(x)).epsilon(1e-12));
    CHECK(talu(x) == doctest::Approx(ref_logistic(2 * x)).epsilon(1e-12));
  }
  CHECK(talu(0.0) == 0.5);
  CHECK(talu(1000.0) == 1.0);
  CHECK(talu(-1000.0) >= 0.0);
  CHECK(std::isfinite(talu(-1000.0)));
}

TEST_CASE("logistic is stable at large magnitude") {
  CHECK(logistic(800.0) == 1.0);
  CHECK(logistic(-800.0) == 0.0);
  CHECK(logistic(0.3) == doctest::Approx(ref_logistic(0.3)).epsilon(1e-15));
}

TEST_CASE("matrix products agree with triple loops") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t m = 1 + rng() % 7, k = 1 + rng() % 7, n = 1 + rng() % 7;
    const Tensor2 a = random_tensor(m, k, rng);
    const Tensor2 b = random_tensor(k, n, rng);
    const Tensor2 bt = naive_transpose(b);
    const Tensor2 at = naive_transpose(a);
    const Tensor2 ref = naive_matmul(a, b);
    check_close(matmul(a, b), ref, 1e-12);
    check_close(matmul_nt(a, bt), ref, 1e-12);
    check_close(matmul_tn(at, b), ref, 1e-12);
    CHECK(transpose(a) == at);
  }
}

TEST_CASE("affine adds a broadcast bias") {
  const Tensor2 x(2, 3, {1, 2, 3, 4, 5, 6});
  const Tensor2 w(2, 3, {1, 0, 0, 0, 1, 1});
  const Tensor2 b(1, 2, {10, 20});
  const Tensor2 y = affine(x, w, b);
  CHECK(y == Tensor2(2, 2, {11, 25, 14, 31}));
  CHECK(affine(x, w, Tensor2()) == Tensor2(2, 2, {1, 5, 4, 11}));
}

TEST_CASE("shape mismatches are rejected") {
  CHECK_THROWS_AS(matmul(Tensor2(2, 3), Tensor2(2, 3)), std::invalid_argument);
  CHECK_THROWS_AS(Tensor2(2, 2, std::vector<double>{1, 2, 3}), std::invalid_argument);
  Tensor2 acc(2, 2);
  CHECK_THROWS_AS(add_inplace(acc, Tensor2(1, 2)), std::invalid_argument);
}

TEST_CASE("finite check and shape string") {
  Tensor2 t(2, 3, 1.0);
  CHECK(t.all_finite());
  CHECK(t.shape_string() == "[2x3]");
  t(1, 2) = std::nan("");
  CHECK_FALSE(t.all_finite());
}

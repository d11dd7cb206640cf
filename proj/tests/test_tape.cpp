#include "fixtures.hpp"
#include "span2d/tape.hpp"

#include <doctest.h>

#include <random>

using namespace span2d;
using namespace span2d::testing;

namespace {

Tensor2 random_tensor(std::size_t r, std::size_t c, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor2 t(r, c);
  for (double& v : t.data()) v = u(rng);
  return t;
}

// Reduces y to Σ y∘R so every output element carries a distinct weight.
Var probe(const Var& y, const Tensor2& weights) {
  GradTape& tape = *y.tape();
  const Var ones_l = tape.constant(Tensor2(1, y.rows(), 1.0));
  const Var ones_r = tape.constant(Tensor2(y.cols(), 1, 1.0));
  return matmul(matmul(ones_l, hadamard(y, tape.constant(weights))), ones_r);
}

using Op = std::function<Var(GradTape&, const std::vector<Var>&)>;

void check_op(const char* name, std::vector<Tensor2> inputs, const Op& op, double tol = 1e-6) {
  CAPTURE(name);
  std::mt19937_64 rng(5);
  Tensor2 weights;
  {
    GradTape tape;
    std::vector<Var> vars;
    for (const Tensor2& t : inputs) vars.push_back(tape.parameter(t));
    const Var y = op(tape, vars);
    weights = random_tensor(y.rows(), y.cols(), rng);
  }
  auto loss_value = [&] {
    GradTape tape;
    std::vector<Var> vars;
    for (const Tensor2& t : inputs) vars.push_back(tape.parameter(t));
    return probe(op(tape, vars), weights).value()[0];
  };
  GradTape tape;
  std::vector<Var> vars;
  for (const Tensor2& t : inputs) vars.push_back(tape.parameter(t));
  const Gradients g = grad_of(tape, probe(op(tape, vars), weights));
  ConstNamedParams params;
  for (std::size_t k = 0; k < inputs.size(); ++k) params.emplace_back("in" + std::to_string(k), &inputs[k]);
  const GradCheckResult r = finite_difference_check(params, g, loss_value, 1e-6, 1e-8);
  CAPTURE(r.worst);
  CHECK(r.max_rel_error < tol);
}

}  // namespace

TEST_CASE("every taped operation matches central differences") {
  std::mt19937_64 rng(17);
  const Tensor2 a = random_tensor(3, 4, rng);
  const Tensor2 b = random_tensor(4, 2, rng);
  const Tensor2 c = random_tensor(3, 4, rng);
  const Tensor2 w = random_tensor(5, 4, rng);
  const Tensor2 bias = random_tensor(1, 5, rng);
  const Tensor2 row = random_tensor(1, 4, rng);
  const Tensor2 col = random_tensor(3, 1, rng);
  const Tensor2 probs = random_tensor(3, 3, rng, 0.05, 0.95);

  check_op("matmul", {a, b}, [](GradTape&, const auto& v) { return matmul(v[0], v[1]); });
  check_op("matmul_nt", {a, c}, [](GradTape&, const auto& v) { return matmul_nt(v[0], v[1]); });
  check_op("affine", {a, w, bias}, [](GradTape&, const auto& v) { return affine(v[0], v[1], v[2]); });
  check_op("add", {a, c}, [](GradTape&, const auto& v) { return add(v[0], v[1]); });
  check_op("sub", {a, c}, [](GradTape&, const auto& v) { return sub(v[0], v[1]); });
  check_op("hadamard", {a, c}, [](GradTape&, const auto& v) { return hadamard(v[0], v[1]); });
  check_op("axpb", {a}, [](GradTape&, const auto& v) { return axpb(v[0], -1.7, 0.3); });
  check_op("add_row", {a, row}, [](GradTape&, const auto& v) { return add_row(v[0], v[1]); });
  check_op("gelu", {a}, [](GradTape&, const auto& v) { return gelu_approx(v[0]); });
  check_op("talu", {a}, [](GradTape&, const auto& v) { return talu(v[0]); });
  check_op("logistic", {a}, [](GradTape&, const auto& v) { return logistic(v[0]); });
  check_op("softmax", {a}, [](GradTape&, const auto& v) { return softmax_rows(v[0]); });
  check_op("layer_norm", {a, row, row},
           [](GradTape&, const auto& v) { return layer_norm_rows(v[0], v[1], v[2]); });
  check_op("gather", {w}, [](GradTape&, const auto& v) {
    const std::vector<std::size_t> ids = {4, 0, 4, 2};
    return gather_rows(v[0], ids);
  });
  check_op("slice_rows", {w}, [](GradTape&, const auto& v) { return slice_rows(v[0], 1, 3); });
  check_op("slice_cols", {w}, [](GradTape&, const auto& v) { return slice_cols(v[0], 1, 2); });
  check_op("concat", {a, c}, [](GradTape&, const auto& v) {
    const std::vector<Var> parts = {v[0], v[1], v[0]};
    return concat_cols(parts);
  });
  check_op("broadcast", {row}, [](GradTape&, const auto& v) { return broadcast_rows(v[0], 3); });
  check_op("expand_col", {col}, [](GradTape&, const auto& v) { return expand_col(v[0]); });
  check_op("expand_row", {col}, [](GradTape&, const auto& v) { return expand_row(v[0]); });
  check_op("bce_cells", {probs}, [](GradTape&, const auto& v) {
    const std::vector<Cell> cells = {{0, 0}, {0, 2}, {1, 1}, {2, 2}};
    const std::vector<double> labels = {1, 0, 1, 0};
    return bce_cells(v[0], cells, labels, 1e-7);
  });
}

TEST_CASE("bce_cells value matches the reference loop") {
  GradTape tape;
  const Tensor2 p(2, 2, {0.2, 0.7, 0.9, 0.4});
  const Var v = tape.constant(p);
  const std::vector<Cell> cells = {{0, 1}, {1, 0}, {1, 1}};
  const std::vector<double> y = {1, 0, 0};
  CHECK(bce_cells(v, cells, y, 1e-7).value()[0] ==
        doctest::Approx(ref_bce({0.7, 0.9, 0.4}, y, 1e-7)).epsilon(1e-14));
}

TEST_CASE("dropout is identity at rate zero and inverted otherwise") {
  std::mt19937_64 rng(1);
  GradTape tape;
  const Tensor2 x(4, 50, 1.0);
  const Var v = tape.constant(x);
  CHECK(dropout(v, 0.0, rng).value() == x);
  const Tensor2 y = dropout(v, 0.5, rng).value();
  std::size_t zeros = 0;
  for (double z : y.data()) {
    CHECK((z == 0.0 || z == 2.0));
    zeros += z == 0.0;
  }
  CHECK(zeros > 50);
  CHECK(zeros < 150);
}

TEST_CASE("gradients exist for registered but unused parameters") {
  GradTape tape;
  const Tensor2 used(1, 1, 2.0);
  const Tensor2 unused(2, 2, 1.0);
  tape.register_parameter(unused);
  const Var p = tape.parameter(used);
  const Gradients g = grad_of(tape, hadamard(p, p));
  CHECK(g.of(used)[0] == doctest::Approx(4.0));
  CHECK(g.of(unused) == Tensor2(2, 2, 0.0));
}

TEST_CASE("a parameter used twice accumulates both paths") {
  GradTape tape;
  const Tensor2 x(1, 1, 3.0);
  const Var a = tape.parameter(x);
  const Var b = tape.parameter(x);
  CHECK(a.id() == b.id());
  const Gradients g = grad_of(tape, add(axpb(a, 2.0), hadamard(b, b)));
  CHECK(g.of(x)[0] == doctest::Approx(2.0 + 6.0));
}

TEST_CASE("loss must be a scalar on the same tape") {
  GradTape tape;
  GradTape other;
  const Tensor2 x(2, 2, 1.0);
  const Var v = tape.parameter(x);
  CHECK_THROWS_AS(grad_of(tape, v), std::invalid_argument);
  const Var s = other.constant(Tensor2(1, 1, 1.0));
  CHECK_THROWS_AS(grad_of(tape, s), std::invalid_argument);
}

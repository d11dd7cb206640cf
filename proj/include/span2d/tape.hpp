#pragma once

#include "span2d/tensor.hpp"

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <random>
#include <span>
#include <unordered_map>
#include <utility>
#include <vector>

namespace span2d {

class GradTape;

/// Handle to a value recorded on a GradTape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Tensor2& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  GradTape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class GradTape;
  Var(GradTape* tape, std::size_t id) : tape_(tape), id_(id) {}

  GradTape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// ∂loss/∂param for every parameter registered on the tape, keyed by parameter address.
class Gradients {
 public:
  const Tensor2& of(const Tensor2& param) const;
  bool contains(const Tensor2& param) const { return grads_.contains(&param); }
  std::size_t size() const { return grads_.size(); }

  /// this += scale · other, adding entries that are missing.
  void accumulate(const Gradients& other, double scale = 1.0);
  Tensor2& slot(const Tensor2& param);

  auto begin() const { return grads_.begin(); }
  auto end() const { return grads_.end(); }

 private:
  std::unordered_map<const Tensor2*, Tensor2> grads_;
};

/// Records tensor operations so the chain rule can be replayed in reverse.
/// Single writer: one tape per forward pass, never shared across threads.
class GradTape {
 public:
  using Backward = std::function<void(GradTape&, const Tensor2& out_grad)>;

  GradTape() = default;
  GradTape(const GradTape&) = delete;
  GradTape& operator=(const GradTape&) = delete;

  Var constant(Tensor2 value);
  /// Leaf referring to an external parameter; the parameter must outlive the tape.
  /// Registering the same parameter twice returns the same leaf.
  Var parameter(const Tensor2& param);
  /// Registers a parameter that may never be used, so it still gets a (zero) gradient.
  void register_parameter(const Tensor2& param);

  Var record(Tensor2 value, std::initializer_list<Var> parents, Backward backward);
  Var record(Tensor2 value, std::span<const Var> parents, Backward backward);

  const Tensor2& value(std::size_t id) const;
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  /// Gradient slot of a node, zero-initialised on first access.
  Tensor2& grad(std::size_t id);
  std::size_t size() const { return nodes_.size(); }

 private:
  friend Gradients grad_of(GradTape& tape, const Var& loss);

  struct Node {
    Tensor2 owned;
    const Tensor2* external = nullptr;
    Tensor2 grad;
    Backward backward;
    bool requires_grad = false;
  };

  std::vector<Node> nodes_;
  std::vector<std::pair<const Tensor2*, std::size_t>> params_;
};

/// Reverse sweep from a 1×1 loss. Throws std::invalid_argument if the loss is not a
/// scalar recorded on this tape.
Gradients grad_of(GradTape& tape, const Var& loss);

// Differentiable operations. Operands must share a tape.
Var matmul(const Var& a, const Var& b);
Var matmul_nt(const Var& a, const Var& b);
Var affine(const Var& x, const Var& w, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var hadamard(const Var& a, const Var& b);
/// scale·a + shift, elementwise.
Var axpb(const Var& a, double scale, double shift = 0.0);
Var add_row(const Var& x, const Var& row);
Var gelu_approx(const Var& x);
Var talu(const Var& x);
Var logistic(const Var& x);
Var softmax_rows(const Var& x);
Var layer_norm_rows(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);
Var gather_rows(const Var& table, std::span<const std::size_t> ids);
Var slice_rows(const Var& x, std::size_t start, std::size_t count);
Var slice_cols(const Var& x, std::size_t start, std::size_t count);
Var concat_cols(std::span<const Var> parts);
/// Repeats a 1×n row `count` times.
Var broadcast_rows(const Var& row, std::size_t count);
/// l×1 column v -> l×l with M[i][j] = v[i].
Var expand_col(const Var& v);
/// l×1 column v -> l×l with M[i][j] = v[j].
Var expand_row(const Var& v);
/// Inverted dropout with a mask drawn from `rng`; identity when rate == 0.
Var dropout(const Var& x, double rate, std::mt19937_64& rng);

/// Mean binary cross entropy over the listed (row, col) cells of `probs`,
/// with predictions clamped to [eps, 1-eps]. Returns a 1×1 value.
struct Cell {
  std::size_t row;
  std::size_t col;
  friend bool operator==(const Cell&, const Cell&) = default;
  friend auto operator<=>(const Cell&, const Cell&) = default;
};
Var bce_cells(const Var& probs, std::span<const Cell> cells, std::span<const double> labels,
              double eps);

}  // namespace span2d

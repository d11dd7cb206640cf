#pragma once

#include "span2d/encoder.hpp"
#include "span2d/tape.hpp"
#include "span2d/tensor.hpp"

#include <optional>
#include <random>
#include <vector>

namespace span2d {

/// Start (or end) pointer: s = ½·[talu(gelu(H·Wᵀ + b_w)·cls) + talu(H·v + b_v)].
struct PointerParams {
  Tensor2 w;    // d×d
  Tensor2 b_w;  // 1×d
  Tensor2 v;    // 1×d
  Tensor2 b_v;  // 1×1

  static PointerParams init(std::size_t dim, std::mt19937_64& rng);
};

/// Gated interactive 2D head. h_2D is l×d (W_2D is d×d) so the gate blend is well-typed.
struct TwoDPParams {
  Tensor2 w_g, b_g;       // d×d, 1×d
  Tensor2 w_2d, b_2d;     // d×d, 1×d
  Tensor2 v_row, b_row;   // 1×d, 1×1
  Tensor2 v_col, b_col;   // 1×d, 1×1

  static TwoDPParams init(std::size_t dim, std::mt19937_64& rng);
};

// Variants used when the interactive attention is ablated: a single linear layer over
// [h_o ; h_cls] replaces every interaction with the global vector.
struct ConcatPointerParams {
  Tensor2 w;  // 1×2d
  Tensor2 b;  // 1×1

  static ConcatPointerParams init(std::size_t dim, std::mt19937_64& rng);
};

struct ConcatTwoDPParams {
  Tensor2 w_c, b_c;      // d×2d, 1×d
  Tensor2 v_row, b_row;  // 1×d, 1×1
  Tensor2 v_col, b_col;  // 1×d, 1×1

  static ConcatTwoDPParams init(std::size_t dim, std::mt19937_64& rng);
};

struct HeadConfig {
  bool interactive_attention = true;
  bool two_dp = true;
  friend bool operator==(const HeadConfig&, const HeadConfig&) = default;
};

struct HeadParams {
  HeadConfig config;
  std::size_t dim = 0;
  std::optional<PointerParams> start, end;
  std::optional<ConcatPointerParams> start_concat, end_concat;
  std::optional<TwoDPParams> twodp;
  std::optional<ConcatTwoDPParams> twodp_concat;

  static HeadParams init(std::size_t dim, const HeadConfig& config, std::mt19937_64& rng);
  /// Throws std::invalid_argument when the populated parameter sets do not match `config`.
  void validate() const;
  NamedParams named_parameters();
  ConstNamedParams named_parameters() const;
};

/// Raw head outputs, before any masking.
struct HeadOutputs {
  std::vector<double> s;
  std::vector<double> e;
  std::optional<Tensor2> m;          // l×l, absent when the 2D head is ablated
  std::optional<Tensor2> attention;  // span interaction matrix, for inspection
};

struct HeadVars {
  Var s;  // l×1
  Var e;  // l×1
  std::optional<Var> m;
  std::optional<Var> attention;
};

Var pointer_forward(GradTape& tape, const Var& hidden, const PointerParams& params);
Var pointer_forward(GradTape& tape, const Var& hidden, const ConcatPointerParams& params);
/// Returns {m, m_sp}.
std::pair<Var, Var> twodp_forward(GradTape& tape, const Var& hidden, const TwoDPParams& params);
std::pair<Var, Var> twodp_forward(GradTape& tape, const Var& hidden, const ConcatTwoDPParams& params);

/// Dropout (training only) is applied to H independently before each head.
HeadVars forward(GradTape& tape, const Var& hidden, const HeadParams& params,
                 const ForwardMode& mode = {});

std::vector<double> pointer_forward(const EncodedSeq& enc, const PointerParams& params);
Tensor2 twodp_forward(const EncodedSeq& enc, const TwoDPParams& params);
HeadOutputs forward(const EncodedSeq& enc, const HeadParams& params);

std::vector<double> column_values(const Tensor2& column);

}  // namespace span2d

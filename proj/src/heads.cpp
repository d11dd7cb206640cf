#include "span2d/heads.hpp"

#include <array>
#include <cmath>
#include <stdexcept>
#include <tuple>

namespace span2d {

namespace {

Tensor2 uniform(std::size_t rows, std::size_t cols, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor2 t(rows, cols);
  for (double& v : t.data()) v = dist(rng);
  return t;
}

double init_bound(std::size_t dim) { return 1.0 / std::sqrt(static_cast<double>(dim)); }

void require_dim(const Var& hidden, std::size_t dim) {
  if (hidden.cols() != dim) {
    throw std::invalid_argument("head expects hidden width " + std::to_string(dim) + ", got " +
                                hidden.value().shape_string());
  }
}

Var cls_row(const Var& hidden) { return slice_rows(hidden, 0, 1); }

// [h_o ; h_cls] per position.
Var with_cls(const Var& hidden) {
  const std::array<Var, 2> parts{hidden, broadcast_rows(cls_row(hidden), hidden.rows())};
  return concat_cols(parts);
}

template <typename Params, typename Out>
void collect_heads(Params& p, Out& out) {
  auto pointer = [&out](const std::string& prefix, auto& ptr) {
    out.emplace_back(prefix + ".w", &ptr.w);
    out.emplace_back(prefix + ".b_w", &ptr.b_w);
    out.emplace_back(prefix + ".v", &ptr.v);
    out.emplace_back(prefix + ".b_v", &ptr.b_v);
  };
  auto concat_pointer = [&out](const std::string& prefix, auto& ptr) {
    out.emplace_back(prefix + ".w", &ptr.w);
    out.emplace_back(prefix + ".b", &ptr.b);
  };
  if (p.start) pointer("heads.start", *p.start);
  if (p.end) pointer("heads.end", *p.end);
  if (p.start_concat) concat_pointer("heads.start_concat", *p.start_concat);
  if (p.end_concat) concat_pointer("heads.end_concat", *p.end_concat);
  if (p.twodp) {
    auto& t = *p.twodp;
    out.emplace_back("heads.twodp.w_g", &t.w_g);
    out.emplace_back("heads.twodp.b_g", &t.b_g);
    out.emplace_back("heads.twodp.w_2d", &t.w_2d);
    out.emplace_back("heads.twodp.b_2d", &t.b_2d);
    out.emplace_back("heads.twodp.v_row", &t.v_row);
    out.emplace_back("heads.twodp.b_row", &t.b_row);
    out.emplace_back("heads.twodp.v_col", &t.v_col);
    out.emplace_back("heads.twodp.b_col", &t.b_col);
  }
  if (p.twodp_concat) {
    auto& t = *p.twodp_concat;
    out.emplace_back("heads.twodp_concat.w_c", &t.w_c);
    out.emplace_back("heads.twodp_concat.b_c", &t.b_c);
    out.emplace_back("heads.twodp_concat.v_row", &t.v_row);
    out.emplace_back("heads.twodp_concat.b_row", &t.b_row);
    out.emplace_back("heads.twodp_concat.v_col", &t.v_col);
    out.emplace_back("heads.twodp_concat.b_col", &t.b_col);
  }
}

}  // namespace

PointerParams PointerParams::init(std::size_t dim, std::mt19937_64& rng) {
  const double b = init_bound(dim);
  return {uniform(dim, dim, b, rng), Tensor2(1, dim), uniform(1, dim, b, rng), Tensor2(1, 1)};
}

TwoDPParams TwoDPParams::init(std::size_t dim, std::mt19937_64& rng) {
  const double b = init_bound(dim);
  TwoDPParams p;
  p.w_g = uniform(dim, dim, b, rng);
  p.b_g = Tensor2(1, dim);
  p.w_2d = uniform(dim, dim, b, rng);
  p.b_2d = Tensor2(1, dim);
  p.v_row = uniform(1, dim, b, rng);
  p.b_row = Tensor2(1, 1);
  p.v_col = uniform(1, dim, b, rng);
  p.b_col = Tensor2(1, 1);
  return p;
}

ConcatPointerParams ConcatPointerParams::init(std::size_t dim, std::mt19937_64& rng) {
  return {uniform(1, 2 * dim, init_bound(dim), rng), Tensor2(1, 1)};
}

ConcatTwoDPParams ConcatTwoDPParams::init(std::size_t dim, std::mt19937_64& rng) {
  const double b = init_bound(dim);
  ConcatTwoDPParams p;
  p.w_c = uniform(dim, 2 * dim, b, rng);
  p.b_c = Tensor2(1, dim);
  p.v_row = uniform(1, dim, b, rng);
  p.b_row = Tensor2(1, 1);
  p.v_col = uniform(1, dim, b, rng);
  p.b_col = Tensor2(1, 1);
  return p;
}

HeadParams HeadParams::init(std::size_t dim, const HeadConfig& config, std::mt19937_64& rng) {
  HeadParams p;
  p.config = config;
  p.dim = dim;
  if (config.interactive_attention) {
    p.start = PointerParams::init(dim, rng);
    p.end = PointerParams::init(dim, rng);
    if (config.two_dp) p.twodp = TwoDPParams::init(dim, rng);
  } else {
    p.start_concat = ConcatPointerParams::init(dim, rng);
    p.end_concat = ConcatPointerParams::init(dim, rng);
    if (config.two_dp) p.twodp_concat = ConcatTwoDPParams::init(dim, rng);
  }
  return p;
}

void HeadParams::validate() const {
  const bool ia = config.interactive_attention;
  const bool pointers_ok = ia ? (start && end && !start_concat && !end_concat)
                              : (start_concat && end_concat && !start && !end);
  const bool twodp_ok = config.two_dp ? (ia ? (twodp && !twodp_concat) : (twodp_concat && !twodp))
                                      : (!twodp && !twodp_concat);
  if (!pointers_ok || !twodp_ok) {
    throw std::invalid_argument(std::string("head parameters do not match configuration (") +
                                (ia ? "interactive attention" : "attention ablated") + ", " +
                                (config.two_dp ? "2D head" : "2D head ablated") + ")");
  }
}

NamedParams HeadParams::named_parameters() {
  NamedParams out;
  collect_heads(*this, out);
  return out;
}

ConstNamedParams HeadParams::named_parameters() const {
  ConstNamedParams out;
  collect_heads(*this, out);
  return out;
}

Var pointer_forward(GradTape& tape, const Var& hidden, const PointerParams& params) {
  require_dim(hidden, params.w.cols());
  Var h = gelu_approx(affine(hidden, tape.parameter(params.w), tape.parameter(params.b_w)));
  Var p_h = talu(matmul_nt(h, cls_row(hidden)));
  Var p_c = talu(affine(hidden, tape.parameter(params.v), tape.parameter(params.b_v)));
  return axpb(add(p_h, p_c), 0.5);
}

Var pointer_forward(GradTape& tape, const Var& hidden, const ConcatPointerParams& params) {
  require_dim(hidden, params.w.cols() / 2);
  return talu(affine(with_cls(hidden), tape.parameter(params.w), tape.parameter(params.b)));
}

std::pair<Var, Var> twodp_forward(GradTape& tape, const Var& hidden, const TwoDPParams& params) {
  require_dim(hidden, params.w_g.cols());
  Var h_g = gelu_approx(affine(hidden, tape.parameter(params.w_g), tape.parameter(params.b_g)));
  Var h_2d = gelu_approx(affine(hidden, tape.parameter(params.w_2d), tape.parameter(params.b_2d)));
  Var gate = logistic(h_g);
  Var h_f = add(hadamard(gate, hidden), hadamard(axpb(gate, -1.0, 1.0), h_2d));

  Var m_sp = talu(matmul_nt(h_2d, h_f));
  Var m_h = talu(matmul_nt(add(h_g, h_2d), cls_row(hidden)));
  Var big_h = axpb(add(expand_col(m_h), expand_row(m_h)), 0.5);
  Var m_row = talu(affine(h_g, tape.parameter(params.v_row), tape.parameter(params.b_row)));
  Var m_col = talu(affine(h_g, tape.parameter(params.v_col), tape.parameter(params.b_col)));

  Var m = axpb(add(add(m_sp, big_h), add(expand_col(m_row), expand_row(m_col))), 0.25);
  return {m, m_sp};
}

std::pair<Var, Var> twodp_forward(GradTape& tape, const Var& hidden, const ConcatTwoDPParams& params) {
  require_dim(hidden, params.w_c.rows());
  Var h_c = gelu_approx(affine(with_cls(hidden), tape.parameter(params.w_c), tape.parameter(params.b_c)));
  Var m_sp = talu(matmul_nt(h_c, h_c));
  Var m_row = talu(affine(h_c, tape.parameter(params.v_row), tape.parameter(params.b_row)));
  Var m_col = talu(affine(h_c, tape.parameter(params.v_col), tape.parameter(params.b_col)));
  Var m = axpb(add(m_sp, add(expand_col(m_row), expand_row(m_col))), 1.0 / 3.0);
  return {m, m_sp};
}

HeadVars forward(GradTape& tape, const Var& hidden, const HeadParams& params,
                 const ForwardMode& mode) {
  params.validate();
  const double rate = mode.head_rate();
  if (rate > 0.0 && mode.rng == nullptr) throw std::invalid_argument("training mode needs an rng");
  auto input = [&]() { return rate > 0.0 ? dropout(hidden, rate, *mode.rng) : hidden; };

  HeadVars out;
  if (params.config.interactive_attention) {
    out.s = pointer_forward(tape, input(), *params.start);
    out.e = pointer_forward(tape, input(), *params.end);
    if (params.twodp) std::tie(out.m, out.attention) = twodp_forward(tape, input(), *params.twodp);
  } else {
    out.s = pointer_forward(tape, input(), *params.start_concat);
    out.e = pointer_forward(tape, input(), *params.end_concat);
    if (params.twodp_concat) {
      std::tie(out.m, out.attention) = twodp_forward(tape, input(), *params.twodp_concat);
    }
  }
  return out;
}

std::vector<double> column_values(const Tensor2& column) {
  return {column.data().begin(), column.data().end()};
}

std::vector<double> pointer_forward(const EncodedSeq& enc, const PointerParams& params) {
  GradTape tape;
  return column_values(pointer_forward(tape, tape.constant(enc.hidden), params).value());
}

Tensor2 twodp_forward(const EncodedSeq& enc, const TwoDPParams& params) {
  GradTape tape;
  return twodp_forward(tape, tape.constant(enc.hidden), params).first.value();
}

HeadOutputs forward(const EncodedSeq& enc, const HeadParams& params) {
  GradTape tape;
  HeadVars vars = forward(tape, tape.constant(enc.hidden), params);
  HeadOutputs out;
  out.s = column_values(vars.s.value());
  out.e = column_values(vars.e.value());
  if (vars.m) out.m = vars.m->value();
  if (vars.attention) out.attention = vars.attention->value();
  return out;
}

}  // namespace span2d

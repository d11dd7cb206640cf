#include "span2d/tape.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace span2d {

namespace {

GradTape& same_tape(const Var& a, const Var& b) {
  if (!a.valid() || a.tape() != b.tape()) {
    throw std::invalid_argument("operands recorded on different tapes");
  }
  return *a.tape();
}

void require_same_shape(const char* op, const Tensor2& a, const Tensor2& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + a.shape_string() +
                                " vs " + b.shape_string());
  }
}

// Accumulates into a parent's gradient only when something upstream needs it.
template <typename F>
void push(GradTape& tape, const Var& parent, F&& contribution) {
  if (tape.requires_grad(parent.id())) contribution(tape.grad(parent.id()));
}

template <typename Fwd, typename Deriv>
Var unary_map(const Var& x, Fwd fwd, Deriv deriv_from_in_out) {
  GradTape& tape = *x.tape();
  const Tensor2& in = x.value();
  Tensor2 out(in.rows(), in.cols());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = fwd(in[i]);
  return tape.record(std::move(out), {x}, [x, deriv_from_in_out](GradTape& t, const Tensor2& g) {
    push(t, x, [&](Tensor2& gx) {
      const Tensor2& in_v = x.value();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * deriv_from_in_out(in_v[i]);
    });
  });
}

}  // namespace

const Tensor2& Var::value() const {
  if (tape_ == nullptr) throw std::logic_error("use of an empty Var");
  return tape_->value(id_);
}

const Tensor2& Gradients::of(const Tensor2& param) const {
  auto it = grads_.find(&param);
  if (it == grads_.end()) throw std::out_of_range("parameter not registered on the tape");
  return it->second;
}

Tensor2& Gradients::slot(const Tensor2& param) {
  auto [it, inserted] = grads_.try_emplace(&param);
  if (inserted) it->second = Tensor2(param.rows(), param.cols());
  return it->second;
}

void Gradients::accumulate(const Gradients& other, double scale) {
  for (const auto& [param, g] : other.grads_) add_inplace(slot(*param), g, scale);
}

Var GradTape::constant(Tensor2 value) {
  Node node;
  node.owned = std::move(value);
  nodes_.push_back(std::move(node));
  return {this, nodes_.size() - 1};
}

Var GradTape::parameter(const Tensor2& param) {
  for (auto& [p, id] : params_) {
    if (p == &param) {
      if (id == static_cast<std::size_t>(-1)) {
        Node node;
        node.external = &param;
        node.requires_grad = true;
        nodes_.push_back(std::move(node));
        id = nodes_.size() - 1;
      }
      return {this, id};
    }
  }
  Node node;
  node.external = &param;
  node.requires_grad = true;
  nodes_.push_back(std::move(node));
  params_.emplace_back(&param, nodes_.size() - 1);
  return {this, nodes_.size() - 1};
}

void GradTape::register_parameter(const Tensor2& param) {
  for (const auto& entry : params_) {
    if (entry.first == &param) return;
  }
  params_.emplace_back(&param, static_cast<std::size_t>(-1));
}

Var GradTape::record(Tensor2 value, std::initializer_list<Var> parents, Backward backward) {
  return record(std::move(value), std::span<const Var>(parents.begin(), parents.size()),
                std::move(backward));
}

Var GradTape::record(Tensor2 value, std::span<const Var> parents, Backward backward) {
  Node node;
  node.owned = std::move(value);
  for (const Var& p : parents) {
    if (p.tape() != this) throw std::invalid_argument("parent recorded on a different tape");
    node.requires_grad = node.requires_grad || nodes_[p.id()].requires_grad;
  }
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return {this, nodes_.size() - 1};
}

const Tensor2& GradTape::value(std::size_t id) const {
  const Node& n = nodes_.at(id);
  return n.external != nullptr ? *n.external : n.owned;
}

Tensor2& GradTape::grad(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) {
    const Tensor2& v = value(id);
    n.grad = Tensor2(v.rows(), v.cols());
  }
  return n.grad;
}

Gradients grad_of(GradTape& tape, const Var& loss) {
  if (loss.tape() != &tape || loss.id() >= tape.nodes_.size()) {
    throw std::invalid_argument("grad_of: loss was not recorded on this tape");
  }
  const Tensor2& lv = loss.value();
  if (lv.rows() != 1 || lv.cols() != 1) {
    throw std::invalid_argument("grad_of: loss must be 1x1, got " + lv.shape_string());
  }
  for (auto& n : tape.nodes_) n.grad = Tensor2();
  tape.grad(loss.id())[0] = 1.0;

  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    GradTape::Node& n = tape.nodes_[id];
    if (!n.requires_grad || !n.backward || n.grad.empty()) continue;
    // Parents always have smaller ids, so this slot is stable during the call.
    n.backward(tape, n.grad);
  }

  Gradients out;
  for (const auto& [param, id] : tape.params_) {
    Tensor2& slot = out.slot(*param);
    if (id != static_cast<std::size_t>(-1) && !tape.nodes_[id].grad.empty()) {
      slot = tape.nodes_[id].grad;
    }
  }
  return out;
}

Var matmul(const Var& a, const Var& b) {
  GradTape& tape = same_tape(a, b);
  return tape.record(matmul(a.value(), b.value()), {a, b}, [a, b](GradTape& t, const Tensor2& g) {
    push(t, a, [&](Tensor2& ga) { add_inplace(ga, matmul_nt(g, b.value())); });
    push(t, b, [&](Tensor2& gb) { add_inplace(gb, matmul_tn(a.value(), g)); });
  });
}

Var matmul_nt(const Var& a, const Var& b) {
  GradTape& tape = same_tape(a, b);
  return tape.record(matmul_nt(a.value(), b.value()), {a, b},
                     [a, b](GradTape& t, const Tensor2& g) {
                       push(t, a, [&](Tensor2& ga) { add_inplace(ga, matmul(g, b.value())); });
                       push(t, b, [&](Tensor2& gb) { add_inplace(gb, matmul_tn(g, a.value())); });
                     });
}

Var affine(const Var& x, const Var& w, const Var& b) {
  GradTape& tape = same_tape(x, w);
  same_tape(x, b);
  return tape.record(affine(x.value(), w.value(), b.value()), {x, w, b},
                     [x, w, b](GradTape& t, const Tensor2& g) {
                       push(t, x, [&](Tensor2& gx) { add_inplace(gx, matmul(g, w.value())); });
                       push(t, w, [&](Tensor2& gw) { add_inplace(gw, matmul_tn(g, x.value())); });
                       push(t, b, [&](Tensor2& gb) {
                         for (std::size_t r = 0; r < g.rows(); ++r)
                           for (std::size_t c = 0; c < g.cols(); ++c) gb[c] += g(r, c);
                       });
                     });
}

Var add(const Var& a, const Var& b) {
  GradTape& tape = same_tape(a, b);
  require_same_shape("add", a.value(), b.value());
  Tensor2 out = a.value();
  add_inplace(out, b.value());
  return tape.record(std::move(out), {a, b}, [a, b](GradTape& t, const Tensor2& g) {
    push(t, a, [&](Tensor2& ga) { add_inplace(ga, g); });
    push(t, b, [&](Tensor2& gb) { add_inplace(gb, g); });
  });
}

Var sub(const Var& a, const Var& b) {
  GradTape& tape = same_tape(a, b);
  require_same_shape("sub", a.value(), b.value());
  Tensor2 out = a.value();
  add_inplace(out, b.value(), -1.0);
  return tape.record(std::move(out), {a, b}, [a, b](GradTape& t, const Tensor2& g) {
    push(t, a, [&](Tensor2& ga) { add_inplace(ga, g); });
    push(t, b, [&](Tensor2& gb) { add_inplace(gb, g, -1.0); });
  });
}

Var hadamard(const Var& a, const Var& b) {
  GradTape& tape = same_tape(a, b);
  require_same_shape("hadamard", a.value(), b.value());
  const Tensor2& av = a.value();
  const Tensor2& bv = b.value();
  Tensor2 out(av.rows(), av.cols());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return tape.record(std::move(out), {a, b}, [a, b](GradTape& t, const Tensor2& g) {
    push(t, a, [&](Tensor2& ga) {
      const Tensor2& bv2 = b.value();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv2[i];
    });
    push(t, b, [&](Tensor2& gb) {
      const Tensor2& av2 = a.value();
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av2[i];
    });
  });
}

Var axpb(const Var& a, double scale, double shift) {
  GradTape& tape = *a.tape();
  const Tensor2& av = a.value();
  Tensor2 out(av.rows(), av.cols());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = scale * av[i] + shift;
  return tape.record(std::move(out), {a}, [a, scale](GradTape& t, const Tensor2& g) {
    push(t, a, [&](Tensor2& ga) { add_inplace(ga, g, scale); });
  });
}

Var add_row(const Var& x, const Var& row) {
  GradTape& tape = same_tape(x, row);
  const Tensor2& xv = x.value();
  const Tensor2& rv = row.value();
  if (rv.rows() != 1 || rv.cols() != xv.cols()) {
    throw std::invalid_argument("add_row: shape mismatch " + xv.shape_string() + " vs " +
                                rv.shape_string());
  }
  Tensor2 out = xv;
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += rv[c];
  return tape.record(std::move(out), {x, row}, [x, row](GradTape& t, const Tensor2& g) {
    push(t, x, [&](Tensor2& gx) { add_inplace(gx, g); });
    push(t, row, [&](Tensor2& gr) {
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) gr[c] += g(r, c);
    });
  });
}

Var gelu_approx(const Var& x) {
  return unary_map(
      x, [](double v) { return gelu_approx(v); }, [](double v) { return gelu_approx_grad(v); });
}

Var talu(const Var& x) {
  return unary_map(
      x, [](double v) { return talu(v); },
      [](double v) {
        const double y = talu(v);
        return 2.0 * y * (1.0 - y);
      });
}

Var logistic(const Var& x) {
  return unary_map(
      x, [](double v) { return logistic(v); },
      [](double v) {
        const double y = logistic(v);
        return y * (1.0 - y);
      });
}

Var softmax_rows(const Var& x) {
  GradTape& tape = *x.tape();
  const Tensor2& xv = x.value();
  Tensor2 out(xv.rows(), xv.cols());
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    auto in = xv.row(r);
    auto o = out.row(r);
    double mx = in.empty() ? 0.0 : in[0];
    for (double v : in) mx = std::max(mx, v);
    double sum = 0.0;
    for (std::size_t c = 0; c < in.size(); ++c) sum += (o[c] = std::exp(in[c] - mx));
    for (double& v : o) v /= sum;
  }
  const std::size_t out_id = tape.size();
  return tape.record(std::move(out), {x}, [x, out_id](GradTape& t, const Tensor2& g) {
    push(t, x, [&](Tensor2& gx) {
      const Tensor2& y = t.value(out_id);
      for (std::size_t r = 0; r < y.rows(); ++r) {
        double dot = 0.0;
        for (std::size_t c = 0; c < y.cols(); ++c) dot += g(r, c) * y(r, c);
        for (std::size_t c = 0; c < y.cols(); ++c) gx(r, c) += y(r, c) * (g(r, c) - dot);
      }
    });
  });
}

Var layer_norm_rows(const Var& x, const Var& gamma, const Var& beta, double eps) {
  GradTape& tape = same_tape(x, gamma);
  same_tape(x, beta);
  const Tensor2& xv = x.value();
  const std::size_t n = xv.cols();
  if (gamma.rows() != 1 || gamma.cols() != n || beta.rows() != 1 || beta.cols() != n) {
    throw std::invalid_argument("layer_norm_rows: scale/shift must be 1x" + std::to_string(n));
  }
  Tensor2 normed(xv.rows(), n);
  std::vector<double> inv_std(xv.rows());
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    auto in = xv.row(r);
    double mean = 0.0;
    for (double v : in) mean += v;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double v : in) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < n; ++c) normed(r, c) = (in[c] - mean) * inv_std[r];
  }
  const Tensor2& gv = gamma.value();
  const Tensor2& bv = beta.value();
  Tensor2 out(xv.rows(), n);
  for (std::size_t r = 0; r < xv.rows(); ++r)
    for (std::size_t c = 0; c < n; ++c) out(r, c) = normed(r, c) * gv[c] + bv[c];

  return tape.record(
      std::move(out), {x, gamma, beta},
      [x, gamma, beta, normed = std::move(normed), inv_std = std::move(inv_std)](
          GradTape& t, const Tensor2& g) {
        const std::size_t cols = normed.cols();
        push(t, gamma, [&](Tensor2& gg) {
          for (std::size_t r = 0; r < g.rows(); ++r)
            for (std::size_t c = 0; c < cols; ++c) gg[c] += g(r, c) * normed(r, c);
        });
        push(t, beta, [&](Tensor2& gb) {
          for (std::size_t r = 0; r < g.rows(); ++r)
            for (std::size_t c = 0; c < cols; ++c) gb[c] += g(r, c);
        });
        push(t, x, [&](Tensor2& gx) {
          const Tensor2& gv2 = gamma.value();
          const double inv_n = 1.0 / static_cast<double>(cols);
          for (std::size_t r = 0; r < g.rows(); ++r) {
            double sum_dn = 0.0;
            double sum_dn_n = 0.0;
            for (std::size_t c = 0; c < cols; ++c) {
              const double dn = g(r, c) * gv2[c];
              sum_dn += dn;
              sum_dn_n += dn * normed(r, c);
            }
            for (std::size_t c = 0; c < cols; ++c) {
              const double dn = g(r, c) * gv2[c];
              gx(r, c) += inv_std[r] * (dn - inv_n * sum_dn - normed(r, c) * inv_n * sum_dn_n);
            }
          }
        });
      });
}

Var gather_rows(const Var& table, std::span<const std::size_t> ids) {
  GradTape& tape = *table.tape();
  const Tensor2& tv = table.value();
  Tensor2 out(ids.size(), tv.cols());
  for (std::size_t k = 0; k < ids.size(); ++k) {
    if (ids[k] >= tv.rows()) {
      throw std::out_of_range("gather_rows: id " + std::to_string(ids[k]) + " >= " +
                              std::to_string(tv.rows()));
    }
    auto src = tv.row(ids[k]);
    std::copy(src.begin(), src.end(), out.row(k).begin());
  }
  std::vector<std::size_t> idx(ids.begin(), ids.end());
  return tape.record(std::move(out), {table},
                     [table, idx = std::move(idx)](GradTape& t, const Tensor2& g) {
                       push(t, table, [&](Tensor2& gt) {
                         for (std::size_t k = 0; k < idx.size(); ++k) {
                           auto dst = gt.row(idx[k]);
                           auto src = g.row(k);
                           for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += src[c];
                         }
                       });
                     });
}

Var slice_rows(const Var& x, std::size_t start, std::size_t count) {
  GradTape& tape = *x.tape();
  const Tensor2& xv = x.value();
  if (start + count > xv.rows()) throw std::out_of_range("slice_rows out of range");
  Tensor2 out(count, xv.cols());
  for (std::size_t r = 0; r < count; ++r) {
    auto src = xv.row(start + r);
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  return tape.record(std::move(out), {x}, [x, start](GradTape& t, const Tensor2& g) {
    push(t, x, [&](Tensor2& gx) {
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) gx(start + r, c) += g(r, c);
    });
  });
}

Var slice_cols(const Var& x, std::size_t start, std::size_t count) {
  GradTape& tape = *x.tape();
  const Tensor2& xv = x.value();
  if (start + count > xv.cols()) throw std::out_of_range("slice_cols out of range");
  Tensor2 out(xv.rows(), count);
  for (std::size_t r = 0; r < xv.rows(); ++r)
    for (std::size_t c = 0; c < count; ++c) out(r, c) = xv(r, start + c);
  return tape.record(std::move(out), {x}, [x, start](GradTape& t, const Tensor2& g) {
    push(t, x, [&](Tensor2& gx) {
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) gx(r, start + c) += g(r, c);
    });
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
  GradTape& tape = *parts[0].tape();
  const std::size_t rows = parts[0].rows();
  std::size_t total = 0;
  for (const Var& p : parts) {
    same_tape(parts[0], p);
    if (p.rows() != rows) {
      throw std::invalid_argument("concat_cols: row mismatch " + parts[0].value().shape_string() +
                                  " vs " + p.value().shape_string());
    }
    total += p.cols();
  }
  Tensor2 out(rows, total);
  std::size_t offset = 0;
  for (const Var& p : parts) {
    const Tensor2& pv = p.value();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < pv.cols(); ++c) out(r, offset + c) = pv(r, c);
    offset += pv.cols();
  }
  std::vector<Var> ps(parts.begin(), parts.end());
  return tape.record(std::move(out), parts, [ps = std::move(ps)](GradTape& t, const Tensor2& g) {
    std::size_t off = 0;
    for (const Var& p : ps) {
      const std::size_t w = p.cols();
      push(t, p, [&](Tensor2& gp) {
        for (std::size_t r = 0; r < g.rows(); ++r)
          for (std::size_t c = 0; c < w; ++c) gp(r, c) += g(r, off + c);
      });
      off += w;
    }
  });
}

Var broadcast_rows(const Var& row, std::size_t count) {
  GradTape& tape = *row.tape();
  const Tensor2& rv = row.value();
  if (rv.rows() != 1) throw std::invalid_argument("broadcast_rows: expected 1xn, got " + rv.shape_string());
  Tensor2 out(count, rv.cols());
  for (std::size_t r = 0; r < count; ++r) std::copy(rv.data().begin(), rv.data().end(), out.row(r).begin());
  return tape.record(std::move(out), {row}, [row](GradTape& t, const Tensor2& g) {
    push(t, row, [&](Tensor2& gr) {
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) gr[c] += g(r, c);
    });
  });
}

Var expand_col(const Var& v) {
  GradTape& tape = *v.tape();
  const Tensor2& vv = v.value();
  if (vv.cols() != 1) throw std::invalid_argument("expand_col: expected lx1, got " + vv.shape_string());
  const std::size_t l = vv.rows();
  Tensor2 out(l, l);
  for (std::size_t i = 0; i < l; ++i)
    for (std::size_t j = 0; j < l; ++j) out(i, j) = vv[i];
  return tape.record(std::move(out), {v}, [v](GradTape& t, const Tensor2& g) {
    push(t, v, [&](Tensor2& gv) {
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j) gv[i] += g(i, j);
    });
  });
}

Var expand_row(const Var& v) {
  GradTape& tape = *v.tape();
  const Tensor2& vv = v.value();
  if (vv.cols() != 1) throw std::invalid_argument("expand_row: expected lx1, got " + vv.shape_string());
  const std::size_t l = vv.rows();
  Tensor2 out(l, l);
  for (std::size_t i = 0; i < l; ++i)
    for (std::size_t j = 0; j < l; ++j) out(i, j) = vv[j];
  return tape.record(std::move(out), {v}, [v](GradTape& t, const Tensor2& g) {
    push(t, v, [&](Tensor2& gv) {
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j) gv[j] += g(i, j);
    });
  });
}

Var dropout(const Var& x, double rate, std::mt19937_64& rng) {
  if (rate <= 0.0) return x;
  if (rate >= 1.0) throw std::invalid_argument("dropout rate must be < 1");
  const Tensor2& xv = x.value();
  Tensor2 mask(xv.rows(), xv.cols());
  std::bernoulli_distribution keep(1.0 - rate);
  const double scale = 1.0 / (1.0 - rate);
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = keep(rng) ? scale : 0.0;
  return hadamard(x, x.tape()->constant(std::move(mask)));
}

Var bce_cells(const Var& probs, std::span<const Cell> cells, std::span<const double> labels,
              double eps) {
  if (cells.size() != labels.size()) throw std::invalid_argument("bce_cells: label count mismatch");
  GradTape& tape = *probs.tape();
  const Tensor2& pv = probs.value();
  double total = 0.0;
  for (std::size_t k = 0; k < cells.size(); ++k) {
    const double x = std::clamp(pv(cells[k].row, cells[k].col), eps, 1.0 - eps);
    const double y = labels[k];
    total -= y * std::log(x) + (1.0 - y) * std::log(1.0 - x);
  }
  const double n = static_cast<double>(cells.size());
  Tensor2 out(1, 1, cells.empty() ? 0.0 : total / n);
  std::vector<Cell> cs(cells.begin(), cells.end());
  std::vector<double> ys(labels.begin(), labels.end());
  return tape.record(std::move(out), {probs},
                     [probs, cs = std::move(cs), ys = std::move(ys), eps](GradTape& t,
                                                                          const Tensor2& g) {
                       if (cs.empty()) return;
                       push(t, probs, [&](Tensor2& gp) {
                         const Tensor2& p = probs.value();
                         const double scale = g[0] / static_cast<double>(cs.size());
                         for (std::size_t k = 0; k < cs.size(); ++k) {
                           const double x = p(cs[k].row, cs[k].col);
                           if (x < eps || x > 1.0 - eps) continue;
                           const double y = ys[k];
                           gp(cs[k].row, cs[k].col) += scale * (-(y / x) + (1.0 - y) / (1.0 - x));
                         }
                       });
                     });
}

}  // namespace span2d

#include "span2d/training.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace span2d {

namespace {

bool sorted_contains(const std::vector<std::size_t>& v, std::size_t x) {
  return std::binary_search(v.begin(), v.end(), x);
}

void sort_unique(std::vector<std::size_t>& v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
}

struct PointerTargets {
  std::vector<Cell> cells;
  std::vector<double> labels;
};

PointerTargets pointer_targets(const std::vector<bool>& eligible, const std::vector<std::size_t>& gold) {
  PointerTargets t;
  for (std::size_t i = 0; i < eligible.size(); ++i) {
    if (!eligible[i]) continue;
    t.cells.push_back({i, 0});
    t.labels.push_back(sorted_contains(gold, i) ? 1.0 : 0.0);
  }
  return t;
}

std::vector<double> span_labels(const MaskedSelection& selection, const GoldLabels& gold) {
  std::vector<double> y;
  y.reserve(selection.cells.size());
  for (const Cell& c : selection.cells) y.push_back(gold.is_span(c.row, c.col) ? 1.0 : 0.0);
  return y;
}

std::vector<double> gather(std::span<const double> values, const std::vector<Cell>& cells) {
  std::vector<double> out;
  out.reserve(cells.size());
  for (const Cell& c : cells) out.push_back(values[c.row]);
  return out;
}

std::vector<double> masked(std::span<const double> v, const std::vector<bool>& eligible) {
  std::vector<double> out(v.begin(), v.end());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!eligible[i]) out[i] = 0.0;
  }
  return out;
}

}  // namespace

StructuralMask build_structural_mask(const TokenSeq& seq) {
  StructuralMask mask;
  mask.start_valid.resize(seq.size());
  mask.end_valid.resize(seq.size());
  for (std::size_t i = 0; i < seq.size(); ++i) {
    const bool text = seq.in_text(i) && !seq.is_special(i);
    mask.start_valid[i] = text && seq.word_initial(i);
    mask.end_valid[i] = text && seq.word_final(i);
  }
  return mask;
}

void apply_structural_mask(HeadOutputs& out, const StructuralMask& mask) {
  const std::size_t l = mask.size();
  if (out.s.size() != l || out.e.size() != l || (out.m && (out.m->rows() != l || out.m->cols() != l))) {
    throw std::invalid_argument("apply_structural_mask: outputs do not match mask length " +
                                std::to_string(l));
  }
  for (std::size_t i = 0; i < l; ++i) {
    if (!mask.start_valid[i]) out.s[i] = 0.0;
    if (!mask.end_valid[i]) out.e[i] = 0.0;
  }
  if (out.m) {
    for (std::size_t i = 0; i < l; ++i)
      for (std::size_t j = 0; j < l; ++j)
        if (!mask.cell(i, j)) (*out.m)(i, j) = 0.0;
  }
}

bool GoldLabels::is_start(std::size_t i) const { return sorted_contains(starts, i); }
bool GoldLabels::is_end(std::size_t j) const { return sorted_contains(ends, j); }
bool GoldLabels::is_span(std::size_t i, std::size_t j) const {
  return std::binary_search(spans.begin(), spans.end(), Cell{i, j});
}

GoldLabels GoldLabels::from_spans(std::vector<Cell> spans) {
  GoldLabels g;
  std::sort(spans.begin(), spans.end());
  spans.erase(std::unique(spans.begin(), spans.end()), spans.end());
  for (const Cell& c : spans) {
    if (c.col < c.row) throw std::invalid_argument("gold span ends before it starts");
    g.starts.push_back(c.row);
    g.ends.push_back(c.col);
  }
  sort_unique(g.starts);
  sort_unique(g.ends);
  g.spans = std::move(spans);
  return g;
}

AlignedGold align_gold(const TokenSeq& seq, std::span<const GoldEntity> entities) {
  const StructuralMask mask = build_structural_mask(seq);
  AlignedGold out;
  std::vector<Cell> spans;
  for (const GoldEntity& ent : entities) {
    std::optional<std::size_t> first;
    std::optional<std::size_t> last;
    for (std::size_t i = seq.text_begin(); i < seq.text_end(); ++i) {
      if (mask.start_valid[i] && seq.spans[i].begin == ent.start) first = i;
      if (mask.end_valid[i] && seq.spans[i].end == ent.end) last = i;
    }
    if (first && last && *last >= *first) {
      spans.push_back({*first, *last});
    } else {
      ++out.dropped;
    }
  }
  out.labels = GoldLabels::from_spans(std::move(spans));
  return out;
}

MaskedSelection select_candidates(std::span<const double> s, std::span<const double> e,
                                  double threshold, const StructuralMask& mask, const Tensor2* m,
                                  const GoldLabels* gold) {
  const std::size_t l = mask.size();
  if (s.size() != l || e.size() != l) {
    throw std::invalid_argument("select_candidates: s/e length does not match mask");
  }
  if (m != nullptr && (m->rows() != l || m->cols() != l)) {
    throw std::invalid_argument("select_candidates: m is " + m->shape_string() + ", expected " +
                                std::to_string(l) + "x" + std::to_string(l));
  }
  MaskedSelection sel;
  for (std::size_t i = 0; i < l; ++i) {
    if (s[i] > threshold) sel.starts.push_back(i);
    if (e[i] > threshold) sel.ends.push_back(i);
  }
  if (gold != nullptr) {
    sel.starts.insert(sel.starts.end(), gold->starts.begin(), gold->starts.end());
    sel.ends.insert(sel.ends.end(), gold->ends.begin(), gold->ends.end());
    sort_unique(sel.starts);
    sort_unique(sel.ends);
  }
  if (m != nullptr) {
    for (std::size_t i : sel.starts) {
      for (std::size_t j : sel.ends) {
        if (!mask.cell(i, j)) continue;
        sel.cells.push_back({i, j});
        sel.values.push_back((*m)(i, j));
      }
    }
  }
  return sel;
}

BceResult bce(std::span<const double> x, std::span<const double> y, double eps) {
  if (x.size() != y.size()) throw std::invalid_argument("bce: prediction/label length mismatch");
  if (x.empty()) return {};
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double p = std::clamp(x[i], eps, 1.0 - eps);
    total -= y[i] * std::log(p) + (1.0 - y[i]) * std::log(1.0 - p);
  }
  return {total / static_cast<double>(x.size()), true};
}

void LossConfig::validate() const {
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw std::invalid_argument("lambda must lie in [0, 1], got " + std::to_string(lambda));
  }
  if (!(train_threshold > 0.0 && train_threshold < 1.0)) {
    throw std::invalid_argument("training threshold must lie in (0, 1), got " +
                                std::to_string(train_threshold));
  }
}

double weighted_loss(double f_s, double f_e, double f_m, double lambda) {
  return (1.0 - lambda) / 2.0 * (f_s + f_e) + lambda * f_m;
}

LossBreakdown combined_loss(std::span<const double> s, std::span<const double> e,
                            const MaskedSelection& selection, const GoldLabels& gold,
                            const StructuralMask& mask, const LossConfig& cfg, bool has_2d) {
  cfg.validate();
  const PointerTargets ts = pointer_targets(mask.start_valid, gold.starts);
  const PointerTargets te = pointer_targets(mask.end_valid, gold.ends);
  LossBreakdown out;
  out.f_s = bce(gather(s, ts.cells), ts.labels, cfg.eps).value;
  out.f_e = bce(gather(e, te.cells), te.labels, cfg.eps).value;
  if (has_2d) {
    const BceResult fm = bce(selection.values, span_labels(selection, gold), cfg.eps);
    out.f_m = fm.value;
    out.m_supervised = fm.supervised;
    out.total = weighted_loss(out.f_s, out.f_e, out.f_m, cfg.lambda);
  } else {
    out.total = 0.5 * (out.f_s + out.f_e);
  }
  return out;
}

TapedLoss combined_loss(const HeadVars& out, const StructuralMask& mask, const GoldLabels& gold,
                        const LossConfig& cfg) {
  const auto s = masked(out.s.value().data(), mask.start_valid);
  const auto e = masked(out.e.value().data(), mask.end_valid);
  const Tensor2* m = out.m ? &out.m->value() : nullptr;
  return combined_loss(out, mask, select_candidates(s, e, cfg.train_threshold, mask, m, &gold), gold, cfg);
}

TapedLoss combined_loss(const HeadVars& out, const StructuralMask& mask,
                        const MaskedSelection& selection, const GoldLabels& gold,
                        const LossConfig& cfg) {
  cfg.validate();
  const PointerTargets ts = pointer_targets(mask.start_valid, gold.starts);
  const PointerTargets te = pointer_targets(mask.end_valid, gold.ends);
  Var f_s = bce_cells(out.s, ts.cells, ts.labels, cfg.eps);
  Var f_e = bce_cells(out.e, te.cells, te.labels, cfg.eps);

  TapedLoss loss;
  loss.parts.f_s = f_s.value()[0];
  loss.parts.f_e = f_e.value()[0];
  if (out.m) {
    const std::vector<double> labels = span_labels(selection, gold);
    Var f_m = bce_cells(*out.m, selection.cells, labels, cfg.eps);
    loss.parts.f_m = f_m.value()[0];
    loss.parts.m_supervised = !selection.cells.empty();
    loss.total = add(axpb(add(f_s, f_e), (1.0 - cfg.lambda) / 2.0), axpb(f_m, cfg.lambda));
  } else {
    loss.total = axpb(add(f_s, f_e), 0.5);
  }
  loss.parts.total = loss.total.value()[0];
  loss.selection = selection;
  return loss;
}

}  // namespace span2d

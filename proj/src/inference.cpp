#include "span2d/inference.hpp"

#include <algorithm>
#include <cstdio>
#include <set>
#include <sstream>
#include <stdexcept>

namespace span2d {

namespace {

std::string percent(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", 100.0 * v);
  return buf;
}

std::string full(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void DecodeConfig::validate() const {
  if (!(threshold > 0.0 && threshold < 1.0)) {
    throw std::invalid_argument("evaluation threshold must lie in (0, 1), got " + std::to_string(threshold));
  }
  if (max_length && *max_length < 1) throw std::invalid_argument("max entity length must be >= 1");
}

std::vector<ScoredSpan> decode_spans(const MaskedSelection& selection, const DecodeConfig& cfg) {
  cfg.validate();
  std::vector<ScoredSpan> out;
  for (std::size_t k = 0; k < selection.cells.size(); ++k) {
    const Cell& c = selection.cells[k];
    if (c.col < c.row) continue;
    if (!(selection.values[k] > cfg.threshold)) continue;
    if (cfg.max_length && c.col - c.row > *cfg.max_length) continue;
    out.push_back({c.row, c.col, selection.values[k]});
  }
  std::sort(out.begin(), out.end(), [](const ScoredSpan& a, const ScoredSpan& b) {
    return std::tie(a.start, a.end) < std::tie(b.start, b.end);
  });
  return out;
}

std::vector<ScoredSpan> decode_spans_1d(std::span<const double> s, std::span<const double> e,
                                        double threshold, const StructuralMask& mask) {
  const std::size_t l = mask.size();
  if (s.size() != l || e.size() != l) throw std::invalid_argument("decode_spans_1d: length mismatch");
  std::vector<ScoredSpan> out;
  for (std::size_t i = 0; i < l; ++i) {
    if (!mask.start_valid[i] || !(s[i] > threshold)) continue;
    for (std::size_t j = i; j < l; ++j) {
      if (mask.end_valid[j] && e[j] > threshold) {
        out.push_back({i, j, 0.5 * (s[i] + e[j])});
        break;
      }
    }
  }
  return out;
}

std::vector<SpanPrediction> to_entities(std::span<const ScoredSpan> spans, const TokenSeq& seq,
                                        const std::string& type, std::size_t sentence) {
  std::vector<SpanPrediction> out;
  out.reserve(spans.size());
  for (const ScoredSpan& sp : spans) {
    SpanPrediction p;
    p.sentence = sentence;
    p.type = type;
    p.start_piece = sp.start;
    p.end_piece = sp.end;
    p.surface = decode_span(seq, sp.start, sp.end);
    p.start_char = seq.spans[sp.start].begin;
    p.end_char = seq.spans[sp.end].end;
    p.score = sp.score;
    out.push_back(std::move(p));
  }
  return out;
}

double f1_score(double precision, double recall) {
  return precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
}

Scores Scores::from_counts(std::size_t predicted, std::size_t gold, std::size_t correct) {
  Scores s;
  s.predicted = predicted;
  s.gold = gold;
  s.correct = correct;
  s.precision = predicted > 0 ? static_cast<double>(correct) / static_cast<double>(predicted) : 0.0;
  s.recall = gold > 0 ? static_cast<double>(correct) / static_cast<double>(gold) : 0.0;
  s.f1 = f1_score(s.precision, s.recall);
  return s;
}

EvalReport evaluate(std::span<const EntityKey> predicted, std::span<const EntityKey> gold,
                    Averaging mode) {
  const std::set<EntityKey> pred_set(predicted.begin(), predicted.end());
  const std::set<EntityKey> gold_set(gold.begin(), gold.end());

  struct Counts {
    std::size_t predicted = 0, gold = 0, correct = 0;
  };
  std::map<std::string, Counts> counts;
  for (const EntityKey& k : pred_set) {
    Counts& c = counts[k.type];
    ++c.predicted;
    if (gold_set.contains(k)) ++c.correct;
  }
  for (const EntityKey& k : gold_set) ++counts[k.type].gold;

  EvalReport report;
  report.mode = mode;
  Counts pooled;
  double p_sum = 0.0, r_sum = 0.0, f_sum = 0.0;
  for (const auto& [type, c] : counts) {
    const Scores s = Scores::from_counts(c.predicted, c.gold, c.correct);
    report.per_type[type] = s;
    pooled.predicted += c.predicted;
    pooled.gold += c.gold;
    pooled.correct += c.correct;
    p_sum += s.precision;
    r_sum += s.recall;
    f_sum += s.f1;
  }
  report.micro = Scores::from_counts(pooled.predicted, pooled.gold, pooled.correct);
  report.macro = report.micro;
  if (!counts.empty()) {
    const double n = static_cast<double>(counts.size());
    report.macro.precision = p_sum / n;
    report.macro.recall = r_sum / n;
    report.macro.f1 = f_sum / n;
  } else {
    report.macro.precision = report.macro.recall = report.macro.f1 = 0.0;
  }
  return report;
}

EvalReport evaluate(std::span<const SpanPrediction> predicted, std::span<const EntityKey> gold,
                    Averaging mode) {
  std::vector<EntityKey> keys;
  keys.reserve(predicted.size());
  for (const SpanPrediction& p : predicted) keys.push_back({p.sentence, p.type, p.start_char, p.end_char});
  return evaluate(keys, gold, mode);
}

std::string EvalReport::table() const {
  std::size_t width = 5;
  for (const auto& [type, s] : per_type) width = std::max(width, type.size());
  std::ostringstream out;
  auto line = [&](const std::string& name, const Scores& s) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-*s %9zu %9zu %9zu %7s %7s %7s\n", static_cast<int>(width),
                  name.c_str(), s.predicted, s.gold, s.correct, percent(s.precision).c_str(),
                  percent(s.recall).c_str(), percent(s.f1).c_str());
    out << buf;
  };
  char head[160];
  std::snprintf(head, sizeof head, "%-*s %9s %9s %9s %7s %7s %7s\n", static_cast<int>(width), "type",
                "predicted", "gold", "correct", "P", "R", "F1");
  out << head;
  for (const auto& [type, s] : per_type) line(type, s);
  line("micro", micro);
  line("macro", macro);
  return out.str();
}

std::string EvalReport::csv() const {
  std::ostringstream out;
  out << "type,predicted,gold,correct,precision,recall,f1\n";
  auto row = [&](const std::string& name, const Scores& s) {
    out << name << ',' << s.predicted << ',' << s.gold << ',' << s.correct << ',' << full(s.precision)
        << ',' << full(s.recall) << ',' << full(s.f1) << '\n';
  };
  for (const auto& [type, s] : per_type) row(type, s);
  row("micro", micro);
  row("macro", macro);
  return out.str();
}

}  // namespace span2d

#pragma once

#include "span2d/inference.hpp"
#include "span2d/model.hpp"
#include "span2d/pipeline.hpp"
#include "span2d/trainer.hpp"
#include "span2d/training.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <set>
#include <string>
#include <tuple>
#include <vector>

namespace span2d::testing {

// Straight-line reference implementations. They deliberately share no code with the
// library beyond plain data types.

inline double ref_logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double ref_talu(double x) { return std::exp(x) / (std::exp(x) + std::exp(-x)); }

inline double ref_bce(const std::vector<double>& x, const std::vector<double>& y, double eps) {
  if (x.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double p = x[i] < eps ? eps : (x[i] > 1.0 - eps ? 1.0 - eps : x[i]);
    sum += y[i] * std::log(p) + (1.0 - y[i]) * std::log(1.0 - p);
  }
  return -sum / static_cast<double>(x.size());
}

/// Every (i, j) satisfying the selection rule, found by scanning the full square.
inline std::set<std::pair<std::size_t, std::size_t>> brute_selection(
    const std::vector<double>& s, const std::vector<double>& e, double t, const std::vector<bool>& sv,
    const std::vector<bool>& ev, const std::set<std::size_t>& gold_s = {},
    const std::set<std::size_t>& gold_e = {}) {
  std::set<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (std::size_t j = 0; j < e.size(); ++j) {
      const bool si = s[i] > t || gold_s.count(i) > 0;
      const bool ej = e[j] > t || gold_e.count(j) > 0;
      if (si && ej && j >= i && sv[i] && ev[j]) out.insert({i, j});
    }
  }
  return out;
}

/// Every (i, j) with m > t_e and j − i ≤ l_m among the listed candidates, by full scan.
inline std::set<std::tuple<std::size_t, std::size_t, double>> brute_decode(
    const std::vector<std::vector<double>>& m, const std::set<std::pair<std::size_t, std::size_t>>& cand,
    double t_e, std::optional<std::size_t> l_m) {
  std::set<std::tuple<std::size_t, std::size_t, double>> out;
  for (std::size_t i = 0; i < m.size(); ++i) {
    for (std::size_t j = 0; j < m.size(); ++j) {
      if (!cand.count({i, j})) continue;
      if (!(m[i][j] > t_e)) continue;
      if (j < i) continue;
      if (l_m && j - i > *l_m) continue;
      out.insert({i, j, m[i][j]});
    }
  }
  return out;
}

inline MergeTable tiny_tokenizer() {
  const std::vector<std::string> corpus = {
      "IL-2 gene expression requires the IL-2 promoter in T cells .",
      "GM-CSF binds the receptor of activated monocytes .",
      "protein dna cell type",
  };
  return train_bpe(corpus, 40);
}

inline QuerySpec tiny_queries() {
  QuerySpec q;
  q.add("Protein", "protein");
  q.add("DNA", "dna");
  return q;
}

inline ModelConfig tiny_config(bool interactive = true, bool two_dp = true) {
  ModelConfig c;
  c.dim = 8;
  c.layers = 2;
  c.heads = 2;
  c.ffn = 12;
  c.cap = 24;
  c.interactive_attention = interactive;
  c.two_dp = two_dp;
  return c;
}

inline Model tiny_model(std::uint64_t seed, bool interactive = true, bool two_dp = true) {
  return Model::create(tiny_config(interactive, two_dp), tiny_tokenizer(), tiny_queries(), seed);
}

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst;
  std::size_t checked = 0;
};

/// Central differences of `loss` with respect to every element of every parameter.
/// Relative error is |a − n| / max(|a|, |n|, floor).
inline GradCheckResult finite_difference_check(const ConstNamedParams& params, const Gradients& analytic,
                                               const std::function<double()>& loss, double step, double floor) {
  GradCheckResult r;
  for (const auto& [name, cp] : params) {
    Tensor2& p = const_cast<Tensor2&>(*cp);
    const Tensor2& g = analytic.of(*cp);
    for (std::size_t k = 0; k < p.size(); ++k) {
      const double orig = p[k];
      p[k] = orig + step;
      const double up = loss();
      p[k] = orig - step;
      const double down = loss();
      p[k] = orig;
      const double numeric = (up - down) / (2.0 * step);
      const double denom = std::max({std::abs(g[k]), std::abs(numeric), floor});
      const double rel = std::abs(g[k] - numeric) / denom;
      ++r.checked;
      if (rel > r.max_rel_error) {
        r.max_rel_error = rel;
        r.worst = name + "[" + std::to_string(k) + "] analytic=" + std::to_string(g[k]) +
                  " numeric=" + std::to_string(numeric);
      }
    }
  }
  return r;
}

/// Hand-built tokenizer whose merges reproduce the piece boundaries of the worked
/// example sentence: PEBP2 → PE·B·P·2, GM-CSF → GM·-·CS·F, A1 → A·1, B1 → B·1.
inline MergeTable worked_example_tokenizer() {
  std::vector<std::string> alphabet;
  for (char c : std::string("PEBGMCSFabcdefghijklmnopqrstuvwxyzA0123456789-.,()")) {
    alphabet.emplace_back(1, c);
  }
  std::vector<Merge> merges = {{"P", "E"}, {"G", "M"}, {"C", "S"}, {"a", "l"},  {"al", "p"},
                               {"alp", "h"}, {"alph", "a"}, {"i", "n"}, {"t", "h"}, {"th", "e"}};
  return MergeTable(alphabet, merges);
}

inline const char* worked_example_sentence() {
  return "PEBP2 alpha A1 , alpha B1 , and GM-CSF";
}

inline const char* worked_example_query() {
  return "protein nitrogenous organic compounds body tissues muscle hair collagen enzymes antibodies";
}

struct WorkedExample {
  TokenSeq seq;
  HeadOutputs raw;
  std::vector<std::string> expected;  // the five surfaces
};

/// s fires at four head pieces, e at four tail pieces, m above threshold at five cells.
inline WorkedExample worked_example() {
  WorkedExample f;
  f.seq = encode(worked_example_tokenizer(), worked_example_query(), worked_example_sentence(), 256);
  const std::size_t l = f.seq.size();
  auto find_piece = [&](const std::string& piece, std::size_t occurrence) {
    std::size_t seen = 0;
    for (std::size_t i = f.seq.text_begin(); i < f.seq.text_end(); ++i) {
      if (f.seq.pieces[i] == piece && seen++ == occurrence) return i;
    }
    throw std::logic_error("piece not found: " + piece);
  };
  const std::size_t pe = find_piece("PE", 0);
  const std::size_t two = find_piece("2", 0);
  const std::size_t alpha1 = find_piece("alpha", 0);
  const std::size_t a1_end = find_piece("1", 0);
  const std::size_t alpha2 = find_piece("alpha", 1);
  const std::size_t b1_end = find_piece("1", 1);
  const std::size_t gm = find_piece("GM", 0);
  const std::size_t f_end = find_piece("F", 0);

  f.raw.s.assign(l, 0.05);
  f.raw.e.assign(l, 0.05);
  for (std::size_t i : {pe, alpha1, alpha2, gm}) f.raw.s[i] = 0.9;
  for (std::size_t j : {two, a1_end, b1_end, f_end}) f.raw.e[j] = 0.9;
  Tensor2 m(l, l, 0.1);
  for (auto [i, j] : std::vector<std::pair<std::size_t, std::size_t>>{
           {pe, two}, {pe, a1_end}, {alpha1, a1_end}, {alpha2, b1_end}, {gm, f_end}}) {
    m(i, j) = 0.8;
  }
  // Distractors inside the selection but below threshold, and a lower-triangle spike.
  m(alpha1, b1_end) = 0.3;
  m(pe, f_end) = 0.4;
  m(f_end, pe) = 0.99;
  f.raw.m = m;
  f.expected = {"PEBP2", "PEBP2 alpha A1", "alpha A1", "alpha B1", "GM-CSF"};
  return f;
}

}  // namespace span2d::testing

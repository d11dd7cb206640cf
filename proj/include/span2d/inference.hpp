#pragma once

#include "span2d/subword.hpp"
#include "span2d/training.hpp"

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace span2d {

struct DecodeConfig {
  double threshold = 0.5;                 // T_e
  std::optional<std::size_t> max_length;  // l_m in pieces; nullopt = unbounded

  void validate() const;
};

struct ScoredSpan {
  std::size_t start = 0;
  std::size_t end = 0;
  double score = 0.0;
  friend bool operator==(const ScoredSpan&, const ScoredSpan&) = default;
};

/// {(i, j) ∈ selection : m[i][j] > T_e ∧ j − i ≤ l_m}, ordered by (i, j).
std::vector<ScoredSpan> decode_spans(const MaskedSelection& selection, const DecodeConfig& cfg);

/// Pointer-only matching for the 2D-ablated model: every start above `threshold` pairs
/// with the nearest end above `threshold` at or after it. Ends may be shared.
/// Score is the mean of the two boundary probabilities.
std::vector<ScoredSpan> decode_spans_1d(std::span<const double> s, std::span<const double> e,
                                        double threshold, const StructuralMask& mask);

struct SpanPrediction {
  std::size_t sentence = 0;
  std::string type;
  std::size_t start_piece = 0;
  std::size_t end_piece = 0;
  std::size_t start_char = 0;
  std::size_t end_char = 0;  // exclusive
  std::string surface;
  double score = 0.0;
};

/// Recovers surfaces from character offsets. Throws std::out_of_range for spans touching
/// the query region or special tokens.
std::vector<SpanPrediction> to_entities(std::span<const ScoredSpan> spans, const TokenSeq& seq,
                                        const std::string& type, std::size_t sentence = 0);

enum class Averaging { kMicro, kMacro };

/// Identity of an entity for scoring: strict match on all four fields.
struct EntityKey {
  std::size_t sentence = 0;
  std::string type;
  std::size_t start = 0;
  std::size_t end = 0;
  friend auto operator<=>(const EntityKey&, const EntityKey&) = default;
};

struct Scores {
  std::size_t predicted = 0;
  std::size_t gold = 0;
  std::size_t correct = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;

  static Scores from_counts(std::size_t predicted, std::size_t gold, std::size_t correct);
};

double f1_score(double precision, double recall);

struct EvalReport {
  Averaging mode = Averaging::kMicro;
  std::map<std::string, Scores> per_type;
  Scores micro;
  Scores macro;  // counts pooled; P, R, F1 are per-type means

  const Scores& headline() const { return mode == Averaging::kMicro ? micro : macro; }
  std::string table() const;
  std::string csv() const;
};

/// Duplicates collapse before counting. Macro averages over every type that appears in
/// either the predictions or the gold set.
EvalReport evaluate(std::span<const EntityKey> predicted, std::span<const EntityKey> gold,
                    Averaging mode = Averaging::kMicro);
EvalReport evaluate(std::span<const SpanPrediction> predicted, std::span<const EntityKey> gold,
                    Averaging mode = Averaging::kMicro);

}  // namespace span2d

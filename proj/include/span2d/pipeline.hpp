#pragma once

#include "span2d/inference.hpp"
#include "span2d/model.hpp"
#include "span2d/training.hpp"

#include <span>
#include <string>
#include <vector>

namespace span2d {

struct Extraction {
  TokenSeq seq;
  StructuralMask mask;
  HeadOutputs raw;
  HeadOutputs masked;
  MaskedSelection selection;
  std::vector<ScoredSpan> spans;
  std::vector<SpanPrediction> entities;
};

/// Mask, select (no gold), decode and recover surfaces from precomputed head outputs.
/// Without an m matrix the pointer-only matcher runs with threshold T_e.
Extraction extract_from_outputs(TokenSeq seq, HeadOutputs raw, const std::string& type,
                                double train_threshold, const DecodeConfig& cfg, std::size_t sentence = 0);

Extraction extract(const Model& model, std::string_view text, const std::string& type,
                   const DecodeConfig& cfg, std::size_t sentence = 0);

/// Every declared type on every sentence.
std::vector<SpanPrediction> predict(const Model& model, std::span<const DatasetSample> samples,
                                    const DecodeConfig& cfg);

std::vector<EntityKey> gold_keys(std::span<const DatasetSample> samples);

}  // namespace span2d

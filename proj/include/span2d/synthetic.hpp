#pragma once

#include "span2d/dataset.hpp"

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace span2d {

/// Small templated biomedical-style corpus with Protein, DNA and CellType entities.
/// Compound mentions such as "IL-2 promoter" or "PEBP2 alpha A1" carry an inner entity.
struct SyntheticCorpus {
  std::vector<DatasetSample> samples;
  QuerySpec queries;
};

SyntheticCorpus make_synthetic_corpus(std::size_t sentences, std::uint64_t seed);

/// Pairs (outer, inner) where inner lies within outer and the two differ.
std::vector<std::pair<GoldEntity, GoldEntity>> nested_pairs(const DatasetSample& sample);

/// Fraction of gold spans that contain, or are contained in, another span of their sentence.
double nesting_rate(std::span<const DatasetSample> samples);

}  // namespace span2d

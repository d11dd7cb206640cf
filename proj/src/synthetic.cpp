#include "span2d/synthetic.hpp"

#include <array>
#include <random>
#include <string_view>

namespace span2d {

namespace {

struct Phrase {
  std::string text;
  std::vector<GoldEntity> entities;  // offsets relative to text
};

constexpr std::array<std::string_view, 8> kProteins = {"IL-2",  "PEBP2", "GM-CSF", "STAT3",
                                                       "c-Jun", "CD28",  "NF-AT",  "TNF"};
constexpr std::array<std::string_view, 5> kCells = {"T cells", "B cells", "monocytes", "Jurkat cells",
                                                     "macrophages"};
constexpr std::array<std::string_view, 3> kPlainDna = {"kappa B enhancer", "AP-1 site", "LTR region"};

constexpr std::array<std::string_view, 6> kFrames = {
    "{A} activates the {B} in {C} .",
    "In {C} , {A} strongly binds to the {B} .",
    "Expression of {A} requires the {B} in resting {C} .",
    "{A} was detected near the {B} of stimulated {C} .",
    "We show that {A} regulates the {B} within {C} .",
    "The {B} is repressed by {A} in human {C} .",
};

template <typename Rng, typename T, std::size_t N>
const T& pick(Rng& rng, const std::array<T, N>& items) {
  return items[std::uniform_int_distribution<std::size_t>(0, N - 1)(rng)];
}

Phrase single(std::string_view text, const char* type) {
  return {std::string(text), {{type, 0, text.size()}}};
}

Phrase wrap(std::string_view inner, std::string_view suffix, const char* outer_type) {
  Phrase p;
  p.text = std::string(inner) + " " + std::string(suffix);
  p.entities = {{outer_type, 0, p.text.size()}, {"Protein", 0, inner.size()}};
  return p;
}

template <typename Rng>
Phrase protein_phrase(Rng& rng) {
  const std::string_view p = pick(rng, kProteins);
  switch (std::uniform_int_distribution<int>(0, 2)(rng)) {
    case 0: return wrap(p, "receptor", "Protein");
    case 1: return wrap(p, "alpha A1", "Protein");
    default: return single(p, "Protein");
  }
}

template <typename Rng>
Phrase dna_phrase(Rng& rng) {
  switch (std::uniform_int_distribution<int>(0, 2)(rng)) {
    case 0: return wrap(pick(rng, kProteins), "promoter", "DNA");
    case 1: return wrap(pick(rng, kProteins), "gene", "DNA");
    default: return single(pick(rng, kPlainDna), "DNA");
  }
}

template <typename Rng>
Phrase cell_phrase(Rng& rng) {
  if (std::uniform_int_distribution<int>(0, 3)(rng) == 0) {
    return wrap(pick(rng, kProteins), "positive T cells", "CellType");
  }
  return single(pick(rng, kCells), "CellType");
}

bool contains(const GoldEntity& outer, const GoldEntity& inner) {
  return outer.start <= inner.start && inner.end <= outer.end && !(outer == inner);
}

}  // namespace

SyntheticCorpus make_synthetic_corpus(std::size_t sentences, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  SyntheticCorpus corpus;
  corpus.queries.add("Protein", "protein enzymes antibodies receptor");
  corpus.queries.add("DNA", "dna gene promoter enhancer site");
  corpus.queries.add("CellType", "cell type cells lines");

  for (std::size_t n = 0; n < sentences; ++n) {
    const std::string_view frame = pick(rng, kFrames);
    const Phrase a = protein_phrase(rng);
    const Phrase b = dna_phrase(rng);
    const Phrase c = cell_phrase(rng);
    DatasetSample sample;
    for (std::size_t k = 0; k < frame.size();) {
      if (frame[k] == '{') {
        const Phrase& p = frame[k + 1] == 'A' ? a : frame[k + 1] == 'B' ? b : c;
        const std::size_t base = sample.text.size();
        sample.text += p.text;
        for (const GoldEntity& g : p.entities) sample.entities.push_back({g.type, base + g.start, base + g.end});
        k += 3;
      } else {
        sample.text += frame[k++];
      }
    }
    corpus.samples.push_back(std::move(sample));
  }
  return corpus;
}

std::vector<std::pair<GoldEntity, GoldEntity>> nested_pairs(const DatasetSample& sample) {
  std::vector<std::pair<GoldEntity, GoldEntity>> out;
  for (const GoldEntity& outer : sample.entities) {
    for (const GoldEntity& inner : sample.entities) {
      if (contains(outer, inner)) out.emplace_back(outer, inner);
    }
  }
  return out;
}

double nesting_rate(std::span<const DatasetSample> samples) {
  std::size_t total = 0;
  std::size_t nested = 0;
  for (const DatasetSample& s : samples) {
    for (const GoldEntity& g : s.entities) {
      ++total;
      for (const GoldEntity& other : s.entities) {
        if (contains(g, other) || contains(other, g)) {
          ++nested;
          break;
        }
      }
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(nested) / static_cast<double>(total);
}

}  // namespace span2d

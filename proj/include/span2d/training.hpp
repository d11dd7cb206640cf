#pragma once

#include "span2d/dataset.hpp"
#include "span2d/heads.hpp"
#include "span2d/subword.hpp"
#include "span2d/tape.hpp"

#include <optional>
#include <span>
#include <vector>

namespace span2d {

inline constexpr double kBceEpsilon = 1e-7;

/// Which pieces may open or close an entity. Starts must be word-initial text pieces and
/// ends word-final text pieces; [CLS]/[SEP]/query pieces are never eligible. A 2D cell
/// (i, j) is valid iff start_valid[i] ∧ end_valid[j] ∧ j ≥ i.
struct StructuralMask {
  std::vector<bool> start_valid;
  std::vector<bool> end_valid;

  std::size_t size() const { return start_valid.size(); }
  bool cell(std::size_t i, std::size_t j) const { return j >= i && start_valid[i] && end_valid[j]; }
};

StructuralMask build_structural_mask(const TokenSeq& seq);

/// Zeroes s/e at ineligible positions and m at invalid cells (including j < i).
void apply_structural_mask(HeadOutputs& out, const StructuralMask& mask);

/// Gold boundaries for one (sentence, type) unit, as piece indices.
struct GoldLabels {
  std::vector<std::size_t> starts;  // sorted, unique
  std::vector<std::size_t> ends;    // sorted, unique
  std::vector<Cell> spans;          // sorted, unique (start, end)

  bool is_start(std::size_t i) const;
  bool is_end(std::size_t j) const;
  bool is_span(std::size_t i, std::size_t j) const;
  static GoldLabels from_spans(std::vector<Cell> spans);
};

/// Maps char-offset entities to first/last pieces. Entities whose boundaries do not fall on
/// eligible pieces (cut by truncation or splitting a word) are dropped and counted.
struct AlignedGold {
  GoldLabels labels;
  std::size_t dropped = 0;
};
AlignedGold align_gold(const TokenSeq& seq, std::span<const GoldEntity> entities);

/// Candidate starts/ends above the threshold and the 2D cells they select.
struct MaskedSelection {
  std::vector<std::size_t> starts;
  std::vector<std::size_t> ends;
  std::vector<Cell> cells;     // (i, j) with i ∈ starts, j ∈ ends, j ≥ i, valid; row-major order
  std::vector<double> values;  // m[i][j] for each cell
};

/// p_s = {i : s[i] > threshold}, p_e = {j : e[j] > threshold}, each united with the gold
/// boundaries when `gold` is given (training). s and e must already be masked.
MaskedSelection select_candidates(std::span<const double> s, std::span<const double> e,
                                  double threshold, const StructuralMask& mask,
                                  const Tensor2* m = nullptr, const GoldLabels* gold = nullptr);

struct BceResult {
  double value = 0.0;
  bool supervised = false;  // false when there was nothing to score
};

/// -(1/n) Σ [y ln x + (1-y) ln(1-x)] with x clamped into [eps, 1-eps].
BceResult bce(std::span<const double> x, std::span<const double> y, double eps = kBceEpsilon);

struct LossConfig {
  double lambda = 0.1;
  double train_threshold = 0.5;
  double eps = kBceEpsilon;

  void validate() const;
};

/// (1-λ)/2·(f_s + f_e) + λ·f_m.
double weighted_loss(double f_s, double f_e, double f_m, double lambda);

struct LossBreakdown {
  double total = 0.0;
  double f_s = 0.0;
  double f_e = 0.0;
  double f_m = 0.0;
  bool m_supervised = false;
};

/// s/e terms cover eligible positions only; the 2D term covers the selected cells only.
/// `has_2d` false drops the 2D term and weights the pointer terms ½ each.
LossBreakdown combined_loss(std::span<const double> s, std::span<const double> e,
                            const MaskedSelection& selection, const GoldLabels& gold,
                            const StructuralMask& mask, const LossConfig& cfg, bool has_2d = true);

struct TapedLoss {
  Var total;
  LossBreakdown parts;
  MaskedSelection selection;
};

/// Builds the training selection from the current outputs (with gold injection) and
/// records the combined loss on the outputs' tape.
TapedLoss combined_loss(const HeadVars& out, const StructuralMask& mask, const GoldLabels& gold,
                        const LossConfig& cfg);
/// Same, with a caller-fixed selection.
TapedLoss combined_loss(const HeadVars& out, const StructuralMask& mask,
                        const MaskedSelection& selection, const GoldLabels& gold,
                        const LossConfig& cfg);

}  // namespace span2d

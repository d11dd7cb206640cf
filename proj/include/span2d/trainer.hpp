#pragma once

#include "span2d/model.hpp"
#include "span2d/training.hpp"

#include <functional>
#include <span>
#include <string>
#include <vector>

namespace span2d {

struct TrainingUnit {
  TokenSeq seq;
  StructuralMask mask;
  GoldLabels gold;
  std::string type;
  std::size_t sample = 0;
};

struct PreparedUnits {
  std::vector<TrainingUnit> units;
  std::size_t dropped_entities = 0;  // gold spans lost to truncation or misalignment
  std::size_t truncated_words = 0;
};

/// One unit per (sentence, declared type), negative units included.
PreparedUnits prepare_units(const Model& model, std::span<const DatasetSample> samples);

struct TrainConfig {
  std::size_t epochs = 10;
  std::size_t batch = 4;
  double lr = 1e-3;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double head_dropout = 0.3;
  double encoder_dropout = 0.1;
  std::uint64_t seed = 0;
  LossConfig loss;

  void validate() const;
};

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  double mean_loss = 0.0;
  double f_s = 0.0;
  double f_e = 0.0;
  double f_m = 0.0;
};

inline constexpr std::string_view kEpochCsvHeader = "epoch,mean_loss,f_s,f_e,f_m";
std::string epoch_csv_line(const EpochLog& log);

/// Adam with decoupled weight decay: p ← p − lr·(m̂/(√v̂ + ε) + wd·p).
class AdamW {
 public:
  AdamW(double lr, double weight_decay, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  void step(const NamedParams& params, const Gradients& grads);
  std::size_t steps() const { return t_; }

 private:
  struct Moments {
    Tensor2 m, v;
  };
  double lr_, wd_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::unordered_map<const Tensor2*, Moments> state_;
};

/// Taped loss of one unit under `mode`.
TapedLoss unit_loss(GradTape& tape, const Model& model, const TrainingUnit& unit, const LossConfig& cfg,
                    const ForwardMode& mode = {});

using EpochCallback = std::function<void(const EpochLog&)>;

/// Mini-batch AdamW over shuffled units; batch loss is the mean over its units.
/// Deterministic for a given seed. Throws NumericError on a non-finite loss.
std::vector<EpochLog> train(Model& model, std::span<const TrainingUnit> units, const TrainConfig& cfg,
                            const EpochCallback& on_epoch = {});

}  // namespace span2d

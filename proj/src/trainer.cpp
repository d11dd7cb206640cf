#include "span2d/trainer.hpp"

#include "span2d/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>

namespace span2d {

PreparedUnits prepare_units(const Model& model, std::span<const DatasetSample> samples) {
  PreparedUnits out;
  for (const QueryUnit& q : expand_samples(samples, model.queries)) {
    TrainingUnit u;
    u.seq = encode(model.tokenizer, q.query, samples[q.sample].text, model.config.cap);
    u.mask = build_structural_mask(u.seq);
    AlignedGold aligned = align_gold(u.seq, q.entities);
    u.gold = std::move(aligned.labels);
    u.type = q.type;
    u.sample = q.sample;
    out.dropped_entities += aligned.dropped;
    out.truncated_words += u.seq.truncated_words;
    out.units.push_back(std::move(u));
  }
  return out;
}

void TrainConfig::validate() const {
  loss.validate();
  if (epochs == 0 || batch == 0) throw std::invalid_argument("epochs and batch size must be positive");
  if (!(lr > 0.0)) throw std::invalid_argument("learning rate must be positive");
  if (!(weight_decay >= 0.0)) throw std::invalid_argument("weight decay must be non-negative");
  if (!(head_dropout >= 0.0 && head_dropout < 1.0) || !(encoder_dropout >= 0.0 && encoder_dropout < 1.0)) {
    throw std::invalid_argument("dropout rates must lie in [0, 1)");
  }
}

std::string epoch_csv_line(const EpochLog& log) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g", log.epoch, log.mean_loss, log.f_s, log.f_e,
                log.f_m);
  return buf;
}

AdamW::AdamW(double lr, double weight_decay, double beta1, double beta2, double eps)
    : lr_(lr), wd_(weight_decay), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void AdamW::step(const NamedParams& params, const Gradients& grads) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (const auto& [name, p] : params) {
    if (!grads.contains(*p)) continue;
    const Tensor2& g = grads.of(*p);
    auto [it, fresh] = state_.try_emplace(p);
    Moments& st = it->second;
    if (fresh) {
      st.m = Tensor2(p->rows(), p->cols(), 0.0);
      st.v = Tensor2(p->rows(), p->cols(), 0.0);
    }
    for (std::size_t k = 0; k < p->size(); ++k) {
      st.m[k] = beta1_ * st.m[k] + (1.0 - beta1_) * g[k];
      st.v[k] = beta2_ * st.v[k] + (1.0 - beta2_) * g[k] * g[k];
      const double m_hat = st.m[k] / c1;
      const double v_hat = st.v[k] / c2;
      (*p)[k] -= lr_ * (m_hat / (std::sqrt(v_hat) + eps_) + wd_ * (*p)[k]);
    }
  }
}

TapedLoss unit_loss(GradTape& tape, const Model& model, const TrainingUnit& unit, const LossConfig& cfg,
                    const ForwardMode& mode) {
  for (const auto& [name, p] : model.named_parameters()) tape.register_parameter(*p);
  const HeadVars out = model_forward(tape, model, unit.seq, mode);
  return combined_loss(out, unit.mask, unit.gold, cfg);
}

std::vector<EpochLog> train(Model& model, std::span<const TrainingUnit> units, const TrainConfig& cfg,
                            const EpochCallback& on_epoch) {
  cfg.validate();
  if (units.empty()) throw DataError("training set is empty");

  const NamedParams params = model.named_parameters();
  AdamW optimizer(cfg.lr, cfg.weight_decay, cfg.beta1, cfg.beta2, cfg.adam_eps);
  std::mt19937_64 shuffle_rng(cfg.seed);
  std::vector<std::size_t> order(units.size());
  std::iota(order.begin(), order.end(), 0);

  std::vector<EpochLog> logs;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    EpochLog log;
    log.epoch = epoch;
    for (std::size_t begin = 0, batch_no = 1; begin < order.size(); begin += cfg.batch, ++batch_no) {
      const std::size_t end = std::min(order.size(), begin + cfg.batch);
      const double scale = 1.0 / static_cast<double>(end - begin);
      Gradients batch_grads;
      for (std::size_t k = begin; k < end; ++k) {
        std::seed_seq seq{static_cast<std::uint64_t>(cfg.seed), static_cast<std::uint64_t>(epoch),
                          static_cast<std::uint64_t>(order[k])};
        std::mt19937_64 rng(seq);
        const ForwardMode mode{true, &rng, cfg.encoder_dropout, cfg.head_dropout};
        GradTape tape;
        const TapedLoss loss = unit_loss(tape, model, units[order[k]], cfg.loss, mode);
        if (!std::isfinite(loss.parts.total)) {
          throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                             std::to_string(batch_no));
        }
        batch_grads.accumulate(grad_of(tape, loss.total), scale);
        log.mean_loss += loss.parts.total;
        log.f_s += loss.parts.f_s;
        log.f_e += loss.parts.f_e;
        log.f_m += loss.parts.f_m;
      }
      optimizer.step(params, batch_grads);
    }
    const double n = static_cast<double>(units.size());
    log.mean_loss /= n;
    log.f_s /= n;
    log.f_e /= n;
    log.f_m /= n;
    model.meta.epochs += 1;
    logs.push_back(log);
    if (on_epoch) on_epoch(log);
  }
  model.meta.seed = cfg.seed;
  model.meta.lambda = cfg.loss.lambda;
  model.meta.train_threshold = cfg.loss.train_threshold;
  return logs;
}

}  // namespace span2d

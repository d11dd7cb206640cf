#include "span2d/pipeline.hpp"

#include "span2d/errors.hpp"

#include <cmath>

namespace span2d {

namespace {

void require_finite(const HeadOutputs& out) {
  auto finite = [](const std::vector<double>& v) {
    for (double x : v) {
      if (!std::isfinite(x)) return false;
    }
    return true;
  };
  if (!finite(out.s) || !finite(out.e) || (out.m && !out.m->all_finite())) {
    throw NumericError("non-finite head output");
  }
}

}  // namespace

Extraction extract_from_outputs(TokenSeq seq, HeadOutputs raw, const std::string& type,
                                double train_threshold, const DecodeConfig& cfg, std::size_t sentence) {
  cfg.validate();
  require_finite(raw);
  Extraction x;
  x.seq = std::move(seq);
  x.mask = build_structural_mask(x.seq);
  x.raw = std::move(raw);
  x.masked = x.raw;
  apply_structural_mask(x.masked, x.mask);
  if (x.masked.m) {
    x.selection = select_candidates(x.masked.s, x.masked.e, train_threshold, x.mask, &*x.masked.m);
    x.spans = decode_spans(x.selection, cfg);
  } else {
    x.selection = select_candidates(x.masked.s, x.masked.e, cfg.threshold, x.mask);
    x.spans = decode_spans_1d(x.masked.s, x.masked.e, cfg.threshold, x.mask);
    if (cfg.max_length) {
      std::erase_if(x.spans, [&](const ScoredSpan& s) { return s.end - s.start > *cfg.max_length; });
    }
  }
  x.entities = to_entities(x.spans, x.seq, type, sentence);
  return x;
}

Extraction extract(const Model& model, std::string_view text, const std::string& type,
                   const DecodeConfig& cfg, std::size_t sentence) {
  TokenSeq seq = model.tokenize(type, text);
  HeadOutputs raw = model_outputs(model, seq);
  return extract_from_outputs(std::move(seq), std::move(raw), type, model.meta.train_threshold, cfg, sentence);
}

std::vector<SpanPrediction> predict(const Model& model, std::span<const DatasetSample> samples,
                                    const DecodeConfig& cfg) {
  std::vector<SpanPrediction> out;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    for (const auto& [type, query] : model.queries.entries()) {
      Extraction x = extract(model, samples[i].text, type, cfg, i);
      out.insert(out.end(), std::make_move_iterator(x.entities.begin()),
                 std::make_move_iterator(x.entities.end()));
    }
  }
  return out;
}

std::vector<EntityKey> gold_keys(std::span<const DatasetSample> samples) {
  std::vector<EntityKey> keys;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    for (const GoldEntity& g : samples[i].entities) keys.push_back({i, g.type, g.start, g.end});
  }
  return keys;
}

}  // namespace span2d

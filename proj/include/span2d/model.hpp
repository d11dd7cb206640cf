#pragma once

#include "span2d/dataset.hpp"
#include "span2d/encoder.hpp"
#include "span2d/heads.hpp"
#include "span2d/subword.hpp"
#include "span2d/tape.hpp"

#include <cstdint>
#include <filesystem>

namespace span2d {

struct ModelConfig {
  std::size_t dim = 64;
  std::size_t layers = 2;
  std::size_t heads = 4;
  std::size_t ffn = 128;
  std::size_t cap = kDefaultSequenceCap;
  bool interactive_attention = true;
  bool two_dp = true;

  void validate() const;
  EncoderConfig encoder_config(std::size_t vocab_size) const;
  HeadConfig head_config() const { return {interactive_attention, two_dp}; }
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct TrainingMeta {
  std::uint32_t epochs = 0;
  std::uint64_t seed = 0;
  double lambda = 0.1;
  double train_threshold = 0.5;
  friend bool operator==(const TrainingMeta&, const TrainingMeta&) = default;
};

/// Tokenizer, queries and all parameters needed to answer a (sentence, type) question.
struct Model {
  ModelConfig config;
  MergeTable tokenizer;
  QuerySpec queries;
  ToyEncoderParams encoder;
  HeadParams heads;
  TrainingMeta meta;

  static Model create(const ModelConfig& config, MergeTable tokenizer, QuerySpec queries,
                      std::uint64_t seed);

  TokenSeq tokenize(std::string_view type, std::string_view sentence) const;
  /// Encoder parameters first, then heads, in a fixed canonical order.
  NamedParams named_parameters();
  ConstNamedParams named_parameters() const;
};

/// Encoder plus heads on one tape. Raw outputs; the structural mask is not applied.
HeadVars model_forward(GradTape& tape, const Model& model, const TokenSeq& seq,
                       const ForwardMode& mode = {});
HeadOutputs model_outputs(const Model& model, const TokenSeq& seq);

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// DataError naming the first differing field with both values.
void check_config(const ModelConfig& found, const ModelConfig& expected);

std::string serialize_checkpoint(const Model& model);
/// When `expected` is given, every architectural field must agree with it.
Model parse_checkpoint(std::string_view bytes, const ModelConfig* expected = nullptr);
void save_checkpoint(const Model& model, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path, const ModelConfig* expected = nullptr);

}  // namespace span2d

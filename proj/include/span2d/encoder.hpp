#pragma once

#include "span2d/subword.hpp"
#include "span2d/tape.hpp"
#include "span2d/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace span2d {

using NamedParams = std::vector<std::pair<std::string, Tensor2*>>;
using ConstNamedParams = std::vector<std::pair<std::string, const Tensor2*>>;

/// Per-position representations of one sequence. `cls` is row 0 of `hidden`.
struct EncodedSeq {
  Tensor2 hidden;  // l×d
  Tensor2 cls;     // 1×d

  static EncodedSeq from_hidden(Tensor2 hidden);
  std::size_t length() const { return hidden.rows(); }
  std::size_t dim() const { return hidden.cols(); }
};

struct EncoderConfig {
  std::size_t vocab_size = 0;
  std::size_t dim = 64;
  std::size_t layers = 2;
  std::size_t heads = 4;
  std::size_t ffn = 128;
  std::size_t cap = kDefaultSequenceCap;

  void validate() const;
  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

struct EncoderLayerParams {
  Tensor2 wq, bq, wk, bk, wv, bv, wo, bo;
  Tensor2 ln1_scale, ln1_shift;
  Tensor2 ff1_w, ff1_b, ff2_w, ff2_b;
  Tensor2 ln2_scale, ln2_shift;
};

/// Small post-norm transformer standing in for a pretrained encoder.
struct ToyEncoderParams {
  EncoderConfig config;
  Tensor2 token_embedding;     // vocab×d
  Tensor2 position_embedding;  // cap×d
  std::vector<EncoderLayerParams> layers;

  static ToyEncoderParams init(const EncoderConfig& config, std::mt19937_64& rng);
  NamedParams named_parameters();
  ConstNamedParams named_parameters() const;
};

/// Training-time randomness; a default-constructed mode is deterministic inference.
struct ForwardMode {
  bool training = false;
  std::mt19937_64* rng = nullptr;
  double encoder_dropout = 0.0;
  double head_dropout = 0.0;

  double encoder_rate() const { return training ? encoder_dropout : 0.0; }
  double head_rate() const { return training ? head_dropout : 0.0; }
};

/// Taped forward pass returning H (l×d). Throws std::out_of_range on a piece id outside
/// the vocabulary and DataError when the sequence exceeds the position cap.
Var encode_seq(GradTape& tape, const ToyEncoderParams& params, const TokenSeq& seq,
               const ForwardMode& mode = {});
EncodedSeq encode_seq(const ToyEncoderParams& params, const TokenSeq& seq);

/// "S2DE" embedding file: magic, u32 version, u32 l, u32 d, then l×d little-endian f32.
inline constexpr std::uint32_t kEmbeddingFileVersion = 1;
void write_embeddings(const std::filesystem::path& path, const Tensor2& hidden);
/// Loads H for `seq`; DataError when the stored l or d disagree with seq / expected_dim.
EncodedSeq load_embeddings(const std::filesystem::path& path, const TokenSeq& seq,
                           std::size_t expected_dim);

}  // namespace span2d

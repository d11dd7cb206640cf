#include "span2d/encoder.hpp"

#include "span2d/errors.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace span2d {

namespace {

Tensor2 uniform(std::size_t rows, std::size_t cols, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor2 t(rows, cols);
  for (double& v : t.data()) v = dist(rng);
  return t;
}

Tensor2 linear_weight(std::size_t out, std::size_t in, std::mt19937_64& rng) {
  return uniform(out, in, 1.0 / std::sqrt(static_cast<double>(in)), rng);
}

template <typename Params, typename Out>
void collect(Params& p, Out& out) {
  out.emplace_back("encoder.token_embedding", &p.token_embedding);
  out.emplace_back("encoder.position_embedding", &p.position_embedding);
  for (std::size_t k = 0; k < p.layers.size(); ++k) {
    auto& layer = p.layers[k];
    const std::string prefix = "encoder.layer" + std::to_string(k) + ".";
    out.emplace_back(prefix + "wq", &layer.wq);
    out.emplace_back(prefix + "bq", &layer.bq);
    out.emplace_back(prefix + "wk", &layer.wk);
    out.emplace_back(prefix + "bk", &layer.bk);
    out.emplace_back(prefix + "wv", &layer.wv);
    out.emplace_back(prefix + "bv", &layer.bv);
    out.emplace_back(prefix + "wo", &layer.wo);
    out.emplace_back(prefix + "bo", &layer.bo);
    out.emplace_back(prefix + "ln1_scale", &layer.ln1_scale);
    out.emplace_back(prefix + "ln1_shift", &layer.ln1_shift);
    out.emplace_back(prefix + "ff1_w", &layer.ff1_w);
    out.emplace_back(prefix + "ff1_b", &layer.ff1_b);
    out.emplace_back(prefix + "ff2_w", &layer.ff2_w);
    out.emplace_back(prefix + "ff2_b", &layer.ff2_b);
    out.emplace_back(prefix + "ln2_scale", &layer.ln2_scale);
    out.emplace_back(prefix + "ln2_shift", &layer.ln2_shift);
  }
}

void put_u32(std::ostream& out, std::uint32_t v) {
  const std::array<char, 4> b{static_cast<char>(v & 0xFF), static_cast<char>((v >> 8) & 0xFF),
                              static_cast<char>((v >> 16) & 0xFF), static_cast<char>((v >> 24) & 0xFF)};
  out.write(b.data(), b.size());
}

std::uint32_t get_u32(std::istream& in, const std::string& what) {
  std::array<unsigned char, 4> b{};
  if (!in.read(reinterpret_cast<char*>(b.data()), b.size())) {
    throw DataError("embedding file truncated while reading " + what);
  }
  return b[0] | (b[1] << 8) | (b[2] << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

EncodedSeq EncodedSeq::from_hidden(Tensor2 hidden) {
  if (hidden.rows() == 0) throw std::invalid_argument("EncodedSeq: empty sequence");
  EncodedSeq enc;
  enc.cls = Tensor2::row_vector(hidden.row(0));
  enc.hidden = std::move(hidden);
  return enc;
}

void EncoderConfig::validate() const {
  if (vocab_size == 0 || dim == 0 || layers == 0 || heads == 0 || ffn == 0 || cap == 0) {
    throw std::invalid_argument("encoder config: all sizes must be positive");
  }
  if (dim % heads != 0) {
    throw std::invalid_argument("encoder config: dim " + std::to_string(dim) +
                                " not divisible by heads " + std::to_string(heads));
  }
}

ToyEncoderParams ToyEncoderParams::init(const EncoderConfig& config, std::mt19937_64& rng) {
  config.validate();
  const std::size_t d = config.dim;
  ToyEncoderParams p;
  p.config = config;
  p.token_embedding = uniform(config.vocab_size, d, 0.5, rng);
  p.position_embedding = uniform(config.cap, d, 0.5, rng);
  for (std::size_t k = 0; k < config.layers; ++k) {
    EncoderLayerParams layer;
    layer.wq = linear_weight(d, d, rng);
    layer.bq = Tensor2(1, d);
    layer.wk = linear_weight(d, d, rng);
    layer.bk = Tensor2(1, d);
    layer.wv = linear_weight(d, d, rng);
    layer.bv = Tensor2(1, d);
    layer.wo = linear_weight(d, d, rng);
    layer.bo = Tensor2(1, d);
    layer.ln1_scale = Tensor2(1, d, 1.0);
    layer.ln1_shift = Tensor2(1, d);
    layer.ff1_w = linear_weight(config.ffn, d, rng);
    layer.ff1_b = Tensor2(1, config.ffn);
    layer.ff2_w = linear_weight(d, config.ffn, rng);
    layer.ff2_b = Tensor2(1, d);
    layer.ln2_scale = Tensor2(1, d, 1.0);
    layer.ln2_shift = Tensor2(1, d);
    p.layers.push_back(std::move(layer));
  }
  return p;
}

NamedParams ToyEncoderParams::named_parameters() {
  NamedParams out;
  collect(*this, out);
  return out;
}

ConstNamedParams ToyEncoderParams::named_parameters() const {
  ConstNamedParams out;
  collect(*this, out);
  return out;
}

Var encode_seq(GradTape& tape, const ToyEncoderParams& params, const TokenSeq& seq,
               const ForwardMode& mode) {
  const EncoderConfig& cfg = params.config;
  const std::size_t l = seq.size();
  if (l > cfg.cap) {
    throw DataError("sequence of " + std::to_string(l) + " pieces exceeds encoder cap " +
                    std::to_string(cfg.cap));
  }
  std::vector<std::size_t> ids(l);
  std::vector<std::size_t> positions(l);
  for (std::size_t i = 0; i < l; ++i) {
    if (seq.ids[i] < 0 || static_cast<std::size_t>(seq.ids[i]) >= cfg.vocab_size) {
      throw std::out_of_range("piece id " + std::to_string(seq.ids[i]) + " at position " +
                              std::to_string(i) + " outside vocabulary of " +
                              std::to_string(cfg.vocab_size));
    }
    ids[i] = static_cast<std::size_t>(seq.ids[i]);
    positions[i] = i;
  }
  const double rate = mode.encoder_rate();
  if (rate > 0.0 && mode.rng == nullptr) throw std::invalid_argument("training mode needs an rng");

  Var x = add(gather_rows(tape.parameter(params.token_embedding), ids),
              gather_rows(tape.parameter(params.position_embedding), positions));

  const std::size_t head_dim = cfg.dim / cfg.heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
  for (const EncoderLayerParams& layer : params.layers) {
    Var q = affine(x, tape.parameter(layer.wq), tape.parameter(layer.bq));
    Var k = affine(x, tape.parameter(layer.wk), tape.parameter(layer.bk));
    Var v = affine(x, tape.parameter(layer.wv), tape.parameter(layer.bv));
    std::vector<Var> heads;
    heads.reserve(cfg.heads);
    for (std::size_t h = 0; h < cfg.heads; ++h) {
      Var qh = slice_cols(q, h * head_dim, head_dim);
      Var kh = slice_cols(k, h * head_dim, head_dim);
      Var vh = slice_cols(v, h * head_dim, head_dim);
      Var weights = softmax_rows(axpb(matmul_nt(qh, kh), scale));
      heads.push_back(matmul(weights, vh));
    }
    Var attn = affine(concat_cols(heads), tape.parameter(layer.wo), tape.parameter(layer.bo));
    if (rate > 0.0) attn = dropout(attn, rate, *mode.rng);
    x = layer_norm_rows(add(x, attn), tape.parameter(layer.ln1_scale),
                        tape.parameter(layer.ln1_shift));

    Var ff = affine(gelu_approx(affine(x, tape.parameter(layer.ff1_w), tape.parameter(layer.ff1_b))),
                    tape.parameter(layer.ff2_w), tape.parameter(layer.ff2_b));
    if (rate > 0.0) ff = dropout(ff, rate, *mode.rng);
    x = layer_norm_rows(add(x, ff), tape.parameter(layer.ln2_scale),
                        tape.parameter(layer.ln2_shift));
  }
  return x;
}

EncodedSeq encode_seq(const ToyEncoderParams& params, const TokenSeq& seq) {
  GradTape tape;
  return EncodedSeq::from_hidden(encode_seq(tape, params, seq).value());
}

void write_embeddings(const std::filesystem::path& path, const Tensor2& hidden) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write embedding file " + path.string());
  out.write("S2DE", 4);
  put_u32(out, kEmbeddingFileVersion);
  put_u32(out, static_cast<std::uint32_t>(hidden.rows()));
  put_u32(out, static_cast<std::uint32_t>(hidden.cols()));
  for (double v : hidden.data()) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  if (!out) throw DataError("failed writing embedding file " + path.string());
}

EncodedSeq load_embeddings(const std::filesystem::path& path, const TokenSeq& seq,
                           std::size_t expected_dim) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read embedding file " + path.string());
  std::array<char, 4> magic{};
  if (!in.read(magic.data(), magic.size()) || std::memcmp(magic.data(), "S2DE", 4) != 0) {
    throw DataError("embedding file " + path.string() + ": bad magic");
  }
  const std::uint32_t version = get_u32(in, "version");
  if (version != kEmbeddingFileVersion) {
    throw DataError("embedding file version " + std::to_string(version) + ", expected " +
                    std::to_string(kEmbeddingFileVersion));
  }
  const std::uint32_t l = get_u32(in, "length");
  const std::uint32_t d = get_u32(in, "dim");
  if (l != seq.size()) {
    throw DataError("embedding length mismatch: expected " + std::to_string(seq.size()) +
                    ", found " + std::to_string(l));
  }
  if (d != expected_dim) {
    throw DataError("embedding dim mismatch: expected " + std::to_string(expected_dim) +
                    ", found " + std::to_string(d));
  }
  Tensor2 hidden(l, d);
  for (double& v : hidden.data()) {
    v = static_cast<double>(std::bit_cast<float>(get_u32(in, "payload")));
    if (!std::isfinite(v)) throw DataError("embedding file contains a non-finite value");
  }
  return EncodedSeq::from_hidden(std::move(hidden));
}

}  // namespace span2d

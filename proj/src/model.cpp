#include "span2d/model.hpp"

#include "span2d/errors.hpp"

#include <bit>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace span2d {

namespace {

constexpr std::string_view kMagic = "S2DC";

class ByteWriter {
 public:
  void bytes(std::string_view s) { out_.append(s); }
  void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int k = 0; k < 4; ++k) u8(static_cast<std::uint8_t>(v >> (8 * k)));
  }
  void u64(std::uint64_t v) {
    for (int k = 0; k < 8; ++k) u8(static_cast<std::uint8_t>(v >> (8 * k)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(std::string_view s) {
    u64(s.size());
    bytes(s);
  }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class ByteReader {
 public:
  explicit ByteReader(std::string_view in) : in_(in) {}

  std::string_view bytes(std::size_t n, const char* what) {
    if (in_.size() - pos_ < n) {
      throw DataError(std::string("checkpoint truncated while reading ") + what);
    }
    std::string_view s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::uint8_t u8(const char* what) { return static_cast<std::uint8_t>(bytes(1, what)[0]); }
  std::uint32_t u32(const char* what) {
    const std::string_view b = bytes(4, what);
    std::uint32_t v = 0;
    for (int k = 3; k >= 0; --k) v = (v << 8) | static_cast<std::uint8_t>(b[k]);
    return v;
  }
  std::uint64_t u64(const char* what) {
    const std::string_view b = bytes(8, what);
    std::uint64_t v = 0;
    for (int k = 7; k >= 0; --k) v = (v << 8) | static_cast<std::uint8_t>(b[k]);
    return v;
  }
  double f64(const char* what) { return std::bit_cast<double>(u64(what)); }
  std::string str(const char* what) {
    const std::uint64_t n = u64(what);
    return std::string(bytes(n, what));
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  std::string_view in_;
  std::size_t pos_ = 0;
};

void check_field(const char* name, std::uint64_t found, std::uint64_t expected) {
  if (found != expected) {
    throw DataError(std::string("checkpoint ") + name + " mismatch: expected " + std::to_string(expected) +
                    ", found " + std::to_string(found));
  }
}

}  // namespace

void ModelConfig::validate() const {
  if (dim == 0 || layers == 0 || heads == 0 || ffn == 0 || cap < 4) {
    throw std::invalid_argument("model config: dim, layers, heads, ffn must be positive and cap >= 4");
  }
  if (dim % heads != 0) {
    throw std::invalid_argument("model config: dim " + std::to_string(dim) + " not divisible by " +
                                std::to_string(heads) + " heads");
  }
}

EncoderConfig ModelConfig::encoder_config(std::size_t vocab_size) const {
  return {vocab_size, dim, layers, heads, ffn, cap};
}

void check_config(const ModelConfig& found, const ModelConfig& expected) {
  check_field("dim", found.dim, expected.dim);
  check_field("layers", found.layers, expected.layers);
  check_field("heads", found.heads, expected.heads);
  check_field("ffn", found.ffn, expected.ffn);
  check_field("cap", found.cap, expected.cap);
  check_field("interactive attention flag", found.interactive_attention, expected.interactive_attention);
  check_field("2D head flag", found.two_dp, expected.two_dp);
}

Model Model::create(const ModelConfig& config, MergeTable tokenizer, QuerySpec queries,
                    std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  Model m;
  m.config = config;
  m.encoder = ToyEncoderParams::init(config.encoder_config(tokenizer.vocab_size()), rng);
  m.heads = HeadParams::init(config.dim, config.head_config(), rng);
  m.tokenizer = std::move(tokenizer);
  m.queries = std::move(queries);
  m.meta.seed = seed;
  return m;
}

TokenSeq Model::tokenize(std::string_view type, std::string_view sentence) const {
  return encode(tokenizer, queries.query_for(type), sentence, config.cap);
}

NamedParams Model::named_parameters() {
  NamedParams out = encoder.named_parameters();
  NamedParams h = heads.named_parameters();
  out.insert(out.end(), h.begin(), h.end());
  return out;
}

ConstNamedParams Model::named_parameters() const {
  ConstNamedParams out = encoder.named_parameters();
  ConstNamedParams h = heads.named_parameters();
  out.insert(out.end(), h.begin(), h.end());
  return out;
}

HeadVars model_forward(GradTape& tape, const Model& model, const TokenSeq& seq, const ForwardMode& mode) {
  const Var hidden = encode_seq(tape, model.encoder, seq, mode);
  return forward(tape, hidden, model.heads, mode);
}

HeadOutputs model_outputs(const Model& model, const TokenSeq& seq) {
  return forward(encode_seq(model.encoder, seq), model.heads);
}

std::string serialize_checkpoint(const Model& model) {
  ByteWriter w;
  w.bytes(kMagic);
  w.u32(kCheckpointVersion);

  const ModelConfig& c = model.config;
  w.u32(static_cast<std::uint32_t>(c.dim));
  w.u32(static_cast<std::uint32_t>(c.layers));
  w.u32(static_cast<std::uint32_t>(c.heads));
  w.u32(static_cast<std::uint32_t>(c.ffn));
  w.u32(static_cast<std::uint32_t>(c.cap));
  w.u8(c.interactive_attention ? 1 : 0);
  w.u8(c.two_dp ? 1 : 0);
  w.u32(static_cast<std::uint32_t>(model.tokenizer.vocab_size()));
  w.u64(model.tokenizer.fingerprint());

  w.u32(model.meta.epochs);
  w.u64(model.meta.seed);
  w.f64(model.meta.lambda);
  w.f64(model.meta.train_threshold);

  w.str(model.tokenizer.serialize());
  w.str(model.queries.to_json());

  const ConstNamedParams params = model.named_parameters();
  w.u32(static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, t] : params) {
    w.str(name);
    w.u32(static_cast<std::uint32_t>(t->rows()));
    w.u32(static_cast<std::uint32_t>(t->cols()));
    for (double v : t->data()) w.f64(v);
  }
  return w.take();
}

Model parse_checkpoint(std::string_view bytes, const ModelConfig* expected) {
  ByteReader r(bytes);
  if (r.bytes(4, "magic") != kMagic) throw DataError("not a span2d checkpoint (bad magic)");
  const std::uint32_t version = r.u32("version");
  check_field("version", version, kCheckpointVersion);

  ModelConfig c;
  c.dim = r.u32("config");
  c.layers = r.u32("config");
  c.heads = r.u32("config");
  c.ffn = r.u32("config");
  c.cap = r.u32("config");
  c.interactive_attention = r.u8("config") != 0;
  c.two_dp = r.u8("config") != 0;
  const std::uint32_t vocab = r.u32("config");
  const std::uint64_t fingerprint = r.u64("config");
  if (expected != nullptr) check_config(c, *expected);
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string("checkpoint: ") + e.what());
  }

  TrainingMeta meta;
  meta.epochs = r.u32("metadata");
  meta.seed = r.u64("metadata");
  meta.lambda = r.f64("metadata");
  meta.train_threshold = r.f64("metadata");

  MergeTable tokenizer = MergeTable::parse(r.str("merge table"));
  check_field("vocabulary size", tokenizer.vocab_size(), vocab);
  check_field("vocabulary fingerprint", tokenizer.fingerprint(), fingerprint);
  QuerySpec queries = QuerySpec::parse(r.str("queries"));

  Model model = Model::create(c, std::move(tokenizer), std::move(queries), meta.seed);
  model.meta = meta;

  std::map<std::string, Tensor2*> slots;
  for (auto& [name, t] : model.named_parameters()) slots.emplace(name, t);

  const std::uint32_t count = r.u32("tensor count");
  check_field("tensor count", count, slots.size());
  for (std::uint32_t k = 0; k < count; ++k) {
    const std::string name = r.str("tensor name");
    auto it = slots.find(name);
    if (it == slots.end()) throw DataError("checkpoint has unexpected tensor '" + name + "'");
    Tensor2& t = *it->second;
    const std::uint32_t rows = r.u32("tensor shape");
    const std::uint32_t cols = r.u32("tensor shape");
    if (rows != t.rows() || cols != t.cols()) {
      throw DataError("checkpoint tensor '" + name + "' shape mismatch: expected " + t.shape_string() +
                      ", found [" + std::to_string(rows) + "x" + std::to_string(cols) + "]");
    }
    for (double& v : t.data()) v = r.f64("tensor data");
    slots.erase(it);
  }
  if (!r.done()) throw DataError("checkpoint has trailing bytes");
  return model;
}

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  const std::string bytes = serialize_checkpoint(model);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed writing checkpoint " + path.string());
}

Model load_checkpoint(const std::filesystem::path& path, const ModelConfig* expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read checkpoint " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_checkpoint(buf.str(), expected);
}

}  // namespace span2d

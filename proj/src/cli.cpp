#include "span2d/cli.hpp"

#include "span2d/errors.hpp"
#include "span2d/pipeline.hpp"
#include "span2d/synthetic.hpp"
#include "span2d/trainer.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

namespace span2d {

namespace {

namespace fs = std::filesystem;

struct ArchFlags {
  std::optional<std::size_t> dim, layers, heads, ffn, cap;

  void add_to(CLI::App& app) {
    app.add_option("--dim", dim, "Expected hidden size");
    app.add_option("--layers", layers, "Expected encoder layers");
    app.add_option("--heads", heads, "Expected attention heads");
    app.add_option("--ffn", ffn, "Expected feed-forward width");
    app.add_option("--cap", cap, "Expected sequence cap in pieces");
  }

  void check(const ModelConfig& found) const {
    ModelConfig expected = found;
    if (dim) expected.dim = *dim;
    if (layers) expected.layers = *layers;
    if (heads) expected.heads = *heads;
    if (ffn) expected.ffn = *ffn;
    if (cap) expected.cap = *cap;
    check_config(found, expected);
  }
};

struct DecodeFlags {
  double t_eval = 0.5;
  std::optional<std::size_t> max_len;

  void add_to(CLI::App& app) {
    app.add_option("--t-eval", t_eval, "Evaluation threshold T_e")->capture_default_str();
    app.add_option("--max-len", max_len, "Maximum entity length in pieces (default unbounded)");
  }
  DecodeConfig config() const { return {t_eval, max_len}; }
};

std::string g17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_text(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << content;
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(std::move(line));
  }
  return lines;
}

Model load_model(const fs::path& ckpt, const std::string& queries, const ArchFlags& arch) {
  Model model = load_checkpoint(ckpt);
  arch.check(model.config);
  if (!queries.empty()) model.queries = QuerySpec::load(queries);
  return model;
}

// ---------------------------------------------------------------------------------------------

struct TrainArgs {
  std::string data, queries, out, merges, log;
  std::size_t bpe_merges = 300;
  ModelConfig model;
  TrainConfig train;
  bool no_ia = false, no_2dp = false;
};

void add_train(CLI::App& app, TrainArgs& a) {
  app.add_option("--data", a.data, "Training set (JSONL)")->required();
  app.add_option("--queries", a.queries, "Query file (JSON type -> keywords)")->required();
  app.add_option("--out", a.out, "Checkpoint path")->required();
  app.add_option("--epochs", a.train.epochs)->capture_default_str();
  app.add_option("--batch", a.train.batch)->capture_default_str();
  app.add_option("--lr", a.train.lr)->capture_default_str();
  app.add_option("--weight-decay", a.train.weight_decay)->capture_default_str();
  app.add_option("--lambda", a.train.loss.lambda, "Weight of the 2D loss term")->capture_default_str();
  app.add_option("--t-train", a.train.loss.train_threshold, "Candidate threshold T_r")->capture_default_str();
  app.add_option("--dropout", a.train.head_dropout, "Dropout before the heads")->capture_default_str();
  app.add_option("--encoder-dropout", a.train.encoder_dropout)->capture_default_str();
  app.add_option("--seed", a.train.seed)->capture_default_str();
  app.add_flag("--no-interactive-attention", a.no_ia, "Replace interactive attention with concatenation");
  app.add_flag("--no-2dp", a.no_2dp, "Drop the 2D head; decode by start/end matching");
  app.add_option("--merges", a.merges, "Existing BPE merge file (otherwise learned from --data)");
  app.add_option("--bpe-merges", a.bpe_merges, "Merges to learn when --merges is absent")->capture_default_str();
  app.add_option("--dim", a.model.dim)->capture_default_str();
  app.add_option("--layers", a.model.layers)->capture_default_str();
  app.add_option("--heads", a.model.heads)->capture_default_str();
  app.add_option("--ffn", a.model.ffn)->capture_default_str();
  app.add_option("--cap", a.model.cap, "Sequence cap in pieces")->capture_default_str();
  app.add_option("--log", a.log, "Also write the per-epoch loss CSV here");
}

int run_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  const std::vector<DatasetSample> samples = load_dataset(a.data);
  if (samples.empty()) throw DataError(a.data + ": no records");
  QuerySpec queries = QuerySpec::load(a.queries);

  MergeTable tokenizer;
  if (!a.merges.empty()) {
    tokenizer = MergeTable::load(a.merges);
  } else {
    std::vector<std::string> corpus;
    for (const DatasetSample& s : samples) corpus.push_back(s.text);
    for (const auto& [type, q] : queries.entries()) corpus.push_back(q);
    tokenizer = train_bpe(corpus, a.bpe_merges);
  }

  ModelConfig mc = a.model;
  mc.interactive_attention = !a.no_ia;
  mc.two_dp = !a.no_2dp;
  Model model = Model::create(mc, std::move(tokenizer), std::move(queries), a.train.seed);

  const PreparedUnits prepared = prepare_units(model, samples);
  if (prepared.dropped_entities > 0 || prepared.truncated_words > 0) {
    err << "note: " << prepared.dropped_entities << " gold entities dropped, " << prepared.truncated_words
        << " words truncated at cap " << mc.cap << "\n";
  }

  std::ostringstream csv;
  csv << kEpochCsvHeader << "\n";
  out << kEpochCsvHeader << "\n";
  train(model, prepared.units, a.train, [&](const EpochLog& log) {
    const std::string line = epoch_csv_line(log);
    out << line << "\n" << std::flush;
    csv << line << "\n";
  });
  save_checkpoint(model, a.out);
  if (!a.log.empty()) write_text(a.log, csv.str());
  return kExitOk;
}

// ---------------------------------------------------------------------------------------------

struct EvalArgs {
  std::string data, ckpt, queries, csv;
  DecodeFlags decode;
  ArchFlags arch;
  bool macro = false, micro = false;
};

void add_eval(CLI::App& app, EvalArgs& a) {
  app.add_option("--data", a.data, "Evaluation set (JSONL)")->required();
  app.add_option("--ckpt", a.ckpt, "Checkpoint")->required();
  app.add_option("--queries", a.queries, "Override the checkpoint's query file");
  a.decode.add_to(app);
  a.arch.add_to(app);
  auto* macro = app.add_flag("--macro", a.macro, "Headline macro-averaged scores");
  auto* micro = app.add_flag("--micro", a.micro, "Headline micro-averaged scores (default)");
  macro->excludes(micro);
  app.add_option("--csv", a.csv, "Also write the report as CSV");
}

int run_eval(const EvalArgs& a, std::ostream& out) {
  const Model model = load_model(a.ckpt, a.queries, a.arch);
  const std::vector<DatasetSample> samples = load_dataset(a.data);
  const std::vector<SpanPrediction> pred = predict(model, samples, a.decode.config());
  const std::vector<EntityKey> gold = gold_keys(samples);
  const EvalReport report = evaluate(pred, gold, a.macro ? Averaging::kMacro : Averaging::kMicro);
  const Scores& h = report.headline();
  char line[96];
  std::snprintf(line, sizeof line, "P=%.1f R=%.1f F1=%.1f\n", 100.0 * h.precision, 100.0 * h.recall,
                100.0 * h.f1);
  out << line << report.table();
  if (!a.csv.empty()) write_text(a.csv, report.csv());
  return kExitOk;
}

// ---------------------------------------------------------------------------------------------

struct ExtractArgs {
  std::string text, data, ckpt, queries, type, dump;
  DecodeFlags decode;
  ArchFlags arch;
};

void add_extract(CLI::App& app, ExtractArgs& a) {
  auto* text = app.add_option("--text", a.text, "Sentence to tag");
  auto* data = app.add_option("--data", a.data, "JSONL file of sentences to tag");
  text->excludes(data);
  app.add_option("--ckpt", a.ckpt, "Checkpoint")->required();
  app.add_option("--queries", a.queries, "Override the checkpoint's query file");
  app.add_option("--type", a.type, "Only this entity type (default: all declared types)");
  a.decode.add_to(app);
  a.arch.add_to(app);
  app.add_option("--dump-matrices", a.dump, "Directory for s/e/m/attention CSV dumps");
}

std::string vector_csv(const std::vector<double>& v) {
  std::string out;
  for (double x : v) out += g17(x) + "\n";
  return out;
}

std::string matrix_csv(const Tensor2& m) {
  std::string out;
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) {
      if (j > 0) out += ',';
      out += g17(m(i, j));
    }
    out += '\n';
  }
  return out;
}

void dump_matrices(const fs::path& dir, std::size_t sentence, const std::string& type, const Extraction& x) {
  const std::string prefix = "sent" + std::to_string(sentence) + "_" + type + "_";
  std::string tokens = "index,piece,begin,end,start_valid,end_valid\n";
  for (std::size_t i = 0; i < x.seq.size(); ++i) {
    const CharSpan& sp = x.seq.spans[i];
    nlohmann::json piece = x.seq.pieces[i];
    tokens += std::to_string(i) + "," + piece.dump() + "," +
              (sp.sentinel() ? std::string("-1,-1") : std::to_string(sp.begin) + "," + std::to_string(sp.end)) +
              "," + (x.mask.start_valid[i] ? "1" : "0") + "," + (x.mask.end_valid[i] ? "1" : "0") + "\n";
  }
  write_text(dir / (prefix + "tokens.csv"), tokens);
  write_text(dir / (prefix + "s.csv"), vector_csv(x.masked.s));
  write_text(dir / (prefix + "e.csv"), vector_csv(x.masked.e));
  if (x.masked.m) write_text(dir / (prefix + "m.csv"), matrix_csv(*x.masked.m));
  if (x.raw.attention) write_text(dir / (prefix + "attention.csv"), matrix_csv(*x.raw.attention));
}

int run_extract(const ExtractArgs& a, std::ostream& out) {
  if (a.text.empty() && a.data.empty()) throw UsageError("extract needs --text or --data");
  const Model model = load_model(a.ckpt, a.queries, a.arch);

  std::vector<std::string> sentences;
  if (!a.text.empty()) {
    sentences.push_back(a.text);
  } else {
    for (const DatasetSample& s : load_dataset(a.data)) sentences.push_back(s.text);
  }
  std::vector<std::string> types;
  if (!a.type.empty()) {
    model.queries.query_for(a.type);
    types.push_back(a.type);
  } else {
    for (const auto& [type, q] : model.queries.entries()) types.push_back(type);
  }
  if (!a.dump.empty()) fs::create_directories(a.dump);

  for (std::size_t i = 0; i < sentences.size(); ++i) {
    nlohmann::ordered_json rec;
    rec["sentence"] = i;
    rec["text"] = sentences[i];
    rec["entities"] = nlohmann::ordered_json::array();
    for (const std::string& type : types) {
      const Extraction x = extract(model, sentences[i], type, a.decode.config(), i);
      for (const SpanPrediction& p : x.entities) {
        rec["entities"].push_back(
            {{"type", p.type}, {"start", p.start_char}, {"end", p.end_char}, {"surface", p.surface}, {"score", p.score}});
      }
      if (!a.dump.empty()) dump_matrices(a.dump, i, type, x);
    }
    out << rec.dump() << "\n";
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------------------------

struct BpeArgs {
  std::string corpus, out;
  std::size_t merges = 300;
};

int run_bpe(const BpeArgs& a, std::ostream& out) {
  const std::vector<std::string> lines = read_lines(a.corpus);
  const MergeTable table = train_bpe(lines, a.merges);
  table.save(a.out);
  out << "learned " << table.merges().size() << " merges, vocabulary " << table.vocab_size() << "\n";
  return kExitOk;
}

struct SynthArgs {
  std::string data_out, queries_out;
  std::size_t sentences = 50;
  std::uint64_t seed = 7;
};

int run_synth(const SynthArgs& a, std::ostream& out) {
  const SyntheticCorpus corpus = make_synthetic_corpus(a.sentences, a.seed);
  write_dataset(a.data_out, corpus.samples);
  corpus.queries.save(a.queries_out);
  char rate[32];
  std::snprintf(rate, sizeof rate, "%.3f", nesting_rate(corpus.samples));
  out << "wrote " << corpus.samples.size() << " sentences, nesting rate " << rate << "\n";
  return kExitOk;
}

}  // namespace

int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Nested entity extraction with pointer and 2D span heads", "span2d"};
  app.require_subcommand(1);

  TrainArgs train_args;
  EvalArgs eval_args;
  ExtractArgs extract_args;
  BpeArgs bpe_args;
  SynthArgs synth_args;

  add_train(*app.add_subcommand("train", "Train a model and write a checkpoint"), train_args);
  add_eval(*app.add_subcommand("eval", "Score a checkpoint on a labelled set"), eval_args);
  add_extract(*app.add_subcommand("extract", "Tag sentences with a checkpoint"), extract_args);
  auto* bpe = app.add_subcommand("bpe-train", "Learn BPE merges from a text corpus");
  bpe->add_option("--corpus", bpe_args.corpus, "One sentence per line")->required();
  bpe->add_option("--merges", bpe_args.merges, "Number of merges")->capture_default_str();
  bpe->add_option("--out", bpe_args.out, "Merge file")->required();
  auto* synth = app.add_subcommand("synth", "Write the synthetic nested corpus and its queries");
  synth->add_option("--sentences", synth_args.sentences)->capture_default_str();
  synth->add_option("--seed", synth_args.seed)->capture_default_str();
  synth->add_option("--out-data", synth_args.data_out, "JSONL output")->required();
  synth->add_option("--out-queries", synth_args.queries_out, "Query JSON output")->required();

  std::vector<std::string> rest(args.size() > 1 ? args.begin() + 1 : args.end(), args.end());
  std::reverse(rest.begin(), rest.end());
  try {
    app.parse(rest);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitUsage;
  }

  try {
    const std::string cmd = app.get_subcommands().front()->get_name();
    if (cmd == "train") return run_train(train_args, out, err);
    if (cmd == "eval") return run_eval(eval_args, out);
    if (cmd == "extract") return run_extract(extract_args, out);
    if (cmd == "bpe-train") return run_bpe(bpe_args, out);
    return run_synth(synth_args, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    err << "invalid argument: " << e.what() << "\n";
    return kExitUsage;
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
}

int run_command(int argc, char** argv) {
  return run_command(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}

}  // namespace span2d

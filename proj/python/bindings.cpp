#include "span2d/cli.hpp"
#include "span2d/errors.hpp"
#include "span2d/pipeline.hpp"
#include "span2d/synthetic.hpp"

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

namespace py = pybind11;
using namespace span2d;

namespace {

py::dict entity_dict(const SpanPrediction& p) {
  py::dict d;
  d["sentence"] = p.sentence;
  d["type"] = p.type;
  d["start"] = p.start_char;
  d["end"] = p.end_char;
  d["start_piece"] = p.start_piece;
  d["end_piece"] = p.end_piece;
  d["surface"] = p.surface;
  d["score"] = p.score;
  return d;
}

py::array_t<double> to_numpy(const std::vector<double>& v) {
  return py::array_t<double>(static_cast<py::ssize_t>(v.size()), v.data());
}

py::array_t<double> to_numpy(const Tensor2& t) {
  py::array_t<double> out({static_cast<py::ssize_t>(t.rows()), static_cast<py::ssize_t>(t.cols())});
  auto view = out.mutable_unchecked<2>();
  for (std::size_t i = 0; i < t.rows(); ++i)
    for (std::size_t j = 0; j < t.cols(); ++j) view(i, j) = t(i, j);
  return out;
}

std::vector<EntityKey> to_keys(const std::vector<std::tuple<std::size_t, std::string, std::size_t, std::size_t>>& v) {
  std::vector<EntityKey> keys;
  for (const auto& [s, t, b, e] : v) keys.push_back({s, t, b, e});
  return keys;
}

py::dict scores_dict(const Scores& s) {
  py::dict d;
  d["predicted"] = s.predicted;
  d["gold"] = s.gold;
  d["correct"] = s.correct;
  d["precision"] = s.precision;
  d["recall"] = s.recall;
  d["f1"] = s.f1;
  return d;
}

DatasetSample sample_from(const py::handle& obj) {
  DatasetSample s;
  s.text = obj["text"].cast<std::string>();
  if (py::cast<py::dict>(obj).contains("entities")) {
    for (const py::handle ent : obj["entities"]) {
      s.entities.push_back({ent["type"].cast<std::string>(), ent["start"].cast<std::size_t>(),
                            ent["end"].cast<std::size_t>()});
    }
  }
  return s;
}

}  // namespace

PYBIND11_MODULE(_span2d, m) {
  m.doc() = "Nested entity extraction with a two-dimensional span head";

  py::register_exception<UsageError>(m, "UsageError", PyExc_ValueError);
  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

  m.def("talu", py::overload_cast<double>(&talu), py::arg("x"));

  py::class_<MergeTable>(m, "Tokenizer")
      .def_static(
          "train", [](const std::vector<std::string>& corpus, std::size_t merges) { return train_bpe(corpus, merges); },
          py::arg("corpus"), py::arg("merges"))
      .def_static("load", &MergeTable::load, py::arg("path"))
      .def_static("parse", &MergeTable::parse, py::arg("text"))
      .def("save", &MergeTable::save, py::arg("path"))
      .def("serialize", &MergeTable::serialize)
      .def("segment", &MergeTable::segment, py::arg("word"))
      .def_property_readonly("vocab_size", &MergeTable::vocab_size)
      .def_property_readonly("fingerprint", &MergeTable::fingerprint)
      .def(
          "encode",
          [](const MergeTable& t, const std::string& query, const std::string& sentence, std::size_t cap) {
            const TokenSeq seq = encode(t, query, sentence, cap);
            py::dict d;
            d["ids"] = seq.ids;
            d["pieces"] = seq.pieces;
            d["continuation"] = seq.continuation;
            d["text_begin"] = seq.text_begin();
            d["text_end"] = seq.text_end();
            return d;
          },
          py::arg("query"), py::arg("sentence"), py::arg("cap") = kDefaultSequenceCap)
      .def("__eq__", [](const MergeTable& a, const MergeTable& b) { return a == b; });

  py::class_<Model>(m, "Model")
      .def_static("load", [](const std::filesystem::path& p) { return load_checkpoint(p); }, py::arg("path"))
      .def("save", [](const Model& model, const std::filesystem::path& p) { save_checkpoint(model, p); },
           py::arg("path"))
      .def_property_readonly("types", [](const Model& model) {
        std::vector<std::string> out;
        for (const auto& [t, q] : model.queries.entries()) out.push_back(t);
        return out;
      })
      .def_property_readonly("queries", [](const Model& model) {
        py::dict d;
        for (const auto& [t, q] : model.queries.entries()) d[py::str(t)] = q;
        return d;
      })
      .def_property_readonly("config", [](const Model& model) {
        py::dict d;
        d["dim"] = model.config.dim;
        d["layers"] = model.config.layers;
        d["heads"] = model.config.heads;
        d["ffn"] = model.config.ffn;
        d["cap"] = model.config.cap;
        d["interactive_attention"] = model.config.interactive_attention;
        d["two_dp"] = model.config.two_dp;
        return d;
      })
      .def(
          "extract",
          [](const Model& model, const std::string& text, const std::string& type, double threshold,
             std::optional<std::size_t> max_length) {
            py::list out;
            for (const SpanPrediction& p : extract(model, text, type, {threshold, max_length}).entities)
              out.append(entity_dict(p));
            return out;
          },
          py::arg("text"), py::arg("type"), py::arg("threshold") = 0.5, py::arg("max_length") = py::none())
      .def(
          "matrices",
          [](const Model& model, const std::string& text, const std::string& type) {
            const Extraction x = extract(model, text, type, {});
            py::dict d;
            d["pieces"] = x.seq.pieces;
            d["s"] = to_numpy(x.masked.s);
            d["e"] = to_numpy(x.masked.e);
            if (x.masked.m) d["m"] = to_numpy(*x.masked.m);
            return d;
          },
          py::arg("text"), py::arg("type"));

  m.def(
      "decode",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& mat,
         const std::vector<double>& s, const std::vector<double>& e, double train_threshold, double threshold,
         std::optional<std::size_t> max_length) {
        if (mat.ndim() != 2 || mat.shape(0) != mat.shape(1)) throw UsageError("m must be a square matrix");
        const std::size_t l = static_cast<std::size_t>(mat.shape(0));
        if (s.size() != l || e.size() != l) throw UsageError("s and e must match the size of m");
        Tensor2 t(l, l);
        auto view = mat.unchecked<2>();
        for (std::size_t i = 0; i < l; ++i)
          for (std::size_t j = 0; j < l; ++j) t(i, j) = view(i, j);
        const StructuralMask mask{std::vector<bool>(l, true), std::vector<bool>(l, true)};
        const DecodeConfig cfg{threshold, max_length};
        cfg.validate();
        std::vector<std::tuple<std::size_t, std::size_t, double>> out;
        for (const ScoredSpan& sp : decode_spans(select_candidates(s, e, train_threshold, mask, &t), cfg))
          out.emplace_back(sp.start, sp.end, sp.score);
        return out;
      },
      py::arg("m"), py::arg("s"), py::arg("e"), py::arg("train_threshold") = 0.5, py::arg("threshold") = 0.5,
      py::arg("max_length") = py::none(),
      "Spans (i, j, m[i][j]) selected by s, e and decoded from m; every position is eligible.");

  m.def(
      "evaluate",
      [](const std::vector<std::tuple<std::size_t, std::string, std::size_t, std::size_t>>& predicted,
         const std::vector<std::tuple<std::size_t, std::string, std::size_t, std::size_t>>& gold, bool macro) {
        const EvalReport r = evaluate(to_keys(predicted), to_keys(gold), macro ? Averaging::kMacro : Averaging::kMicro);
        py::dict d;
        d["micro"] = scores_dict(r.micro);
        d["macro"] = scores_dict(r.macro);
        py::dict per;
        for (const auto& [t, s] : r.per_type) per[py::str(t)] = scores_dict(s);
        d["per_type"] = per;
        d["table"] = r.table();
        return d;
      },
      py::arg("predicted"), py::arg("gold"), py::arg("macro") = false,
      "Strict-match scores over (sentence, type, start, end) tuples.");

  m.def(
      "predict",
      [](const Model& model, const py::list& samples, double threshold, std::optional<std::size_t> max_length) {
        std::vector<DatasetSample> data;
        for (const py::handle h : samples) data.push_back(sample_from(h));
        py::list out;
        for (const SpanPrediction& p : predict(model, data, {threshold, max_length})) out.append(entity_dict(p));
        return out;
      },
      py::arg("model"), py::arg("samples"), py::arg("threshold") = 0.5, py::arg("max_length") = py::none());

  m.def(
      "synthetic_corpus",
      [](std::size_t sentences, std::uint64_t seed) {
        const SyntheticCorpus c = make_synthetic_corpus(sentences, seed);
        py::list samples;
        for (const DatasetSample& s : c.samples) {
          py::list ents;
          for (const GoldEntity& g : s.entities) {
            py::dict e;
            e["type"] = g.type;
            e["start"] = g.start;
            e["end"] = g.end;
            ents.append(e);
          }
          py::dict d;
          d["text"] = s.text;
          d["entities"] = ents;
          samples.append(d);
        }
        py::dict queries;
        for (const auto& [t, q] : c.queries.entries()) queries[py::str(t)] = q;
        return py::make_tuple(samples, queries);
      },
      py::arg("sentences") = 50, py::arg("seed") = 7);

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::vector<std::string> argv = {"span2d"};
        argv.insert(argv.end(), args.begin(), args.end());
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release release;
          code = run_command(argv, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs a span2d subcommand in-process; returns (exit code, stdout, stderr).");
}

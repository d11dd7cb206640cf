// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include "fixtures.hpp"
#include "span2d/synthetic.hpp"

#include <chrono>
#include <cstdio>
#include <cstring>
#include <iostream>
#include <sstream>

using namespace span2d;
using namespace span2d::testing;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

int g_failures = 0;

void report(const char* name, double budget_s, const std::function<Outcome()>& body) {
  const auto t0 = Clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  const bool in_time = secs < budget_s;
  const bool pass = o.pass && in_time;
  if (!pass) ++g_failures;
  std::printf("%s  %-26s %7.2fs (budget %.0fs)  %s%s\n", pass ? "PASS" : "FAIL", name, secs, budget_s,
              o.detail.c_str(), in_time ? "" : "  [over time budget]");
  std::fflush(stdout);
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

// -------------------------------------------------------------------------------------------

Outcome activation_identities() {
  constexpr double kIdentityTol = 1e-12;
  constexpr double kSymmetryTol = 1e-15;
  constexpr double kDerivTol = 1e-6;
  double worst_identity = 0.0, worst_sym = 0.0;
  for (int k = 0; k < 10000; ++k) {
    const double x = -20.0 + 40.0 * k / 9999.0;
    worst_identity = std::max(worst_identity, std::abs(talu(x) - ref_logistic(2.0 * x)));
    worst_identity = std::max(worst_identity, std::abs(talu(x) - logistic(2.0 * x)));
    worst_sym = std::max(worst_sym, std::abs(talu(x) + talu(-x) - 1.0));
  }
  const double h = 1e-5;
  const double deriv0 = (talu(h) - talu(-h)) / (2 * h);
  Outcome o;
  o.pass = worst_identity < kIdentityTol && talu(0.0) == 0.5 && worst_sym <= kSymmetryTol &&
           std::abs(deriv0 - 0.5) < kDerivTol;
  o.detail = fmt("max|talu-logistic2x|=%.2e max|sym-1|=%.2e talu'(0)=%.9f", worst_identity, worst_sym, deriv0);
  return o;
}

// -------------------------------------------------------------------------------------------

Outcome gradient_suite() {
  constexpr double kStep = 1e-5;
  constexpr double kRelTol = 1e-4;
  constexpr double kFloor = 1e-6;  // denominators below this count as absolute error
  const std::vector<std::string> sentences = {
      "IL-2 gene expression requires the IL-2 promoter in T cells .",
      "GM-CSF binds the receptor of activated monocytes .",
      "the IL-2 promoter binds GM-CSF",
      "T cells express the receptor",
  };
  double worst = 0.0;
  std::string worst_where;
  std::size_t checked = 0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    std::mt19937_64 rng(seed * 7919);
    const bool interactive = seed % 5 != 0;
    const Model model = tiny_model(seed, interactive, true);
    const std::string type = seed % 2 ? "Protein" : "DNA";
    const TokenSeq seq = model.tokenize(type, sentences[rng() % sentences.size()]);
    const StructuralMask mask = build_structural_mask(seq);

    std::vector<std::size_t> starts, ends;
    for (std::size_t i = 0; i < seq.size(); ++i) {
      if (mask.start_valid[i]) starts.push_back(i);
      if (mask.end_valid[i]) ends.push_back(i);
    }
    std::vector<Cell> spans;
    for (int k = 0; k < 2; ++k) {
      const std::size_t i = starts[rng() % starts.size()];
      std::vector<std::size_t> later;
      for (std::size_t j : ends) {
        if (j >= i) later.push_back(j);
      }
      if (!later.empty()) spans.push_back({i, later[rng() % later.size()]});
    }
    const GoldLabels gold = GoldLabels::from_spans(spans);
    const LossConfig cfg{0.1, 0.5, kBceEpsilon};

    MaskedSelection selection;
    Gradients analytic;
    {
      GradTape tape;
      for (const auto& [n, p] : model.named_parameters()) tape.register_parameter(*p);
      const HeadVars out = model_forward(tape, model, seq);
      const TapedLoss loss = combined_loss(out, mask, gold, cfg);
      selection = loss.selection;
      analytic = grad_of(tape, loss.total);
    }
    auto loss_value = [&] {
      GradTape tape;
      const HeadVars out = model_forward(tape, model, seq);
      return combined_loss(out, mask, selection, gold, cfg).total.value()[0];
    };
    const GradCheckResult r =
        finite_difference_check(model.named_parameters(), analytic, loss_value, kStep, kFloor);
    checked += r.checked;
    if (r.max_rel_error > worst) {
      worst = r.max_rel_error;
      worst_where = "seed " + std::to_string(seed) + " " + r.worst;
    }
  }
  Outcome o;
  o.pass = worst < kRelTol;
  o.detail = fmt("100 seeds, %.0f partials, max rel err %.2e", static_cast<double>(checked), worst);
  if (!o.pass) o.detail += " at " + worst_where;
  return o;
}

// -------------------------------------------------------------------------------------------

Outcome mask_invariants() {
  const MergeTable tok = tiny_tokenizer();
  const std::vector<std::string> vocab = {"IL-2", "gene", "promoter", "T", "cells", "GM-CSF", "binds", "lowest",
                                          "receptor", ",", "monocytes", "expression", "xqz"};
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::size_t mismatches = 0, leaks = 0;
  for (int trial = 0; trial < 500; ++trial) {
    std::string sentence, query;
    for (std::size_t k = 0, n = 1 + rng() % 10; k < n; ++k) sentence += (k ? " " : "") + vocab[rng() % vocab.size()];
    for (std::size_t k = 0, n = 1 + rng() % 3; k < n; ++k) query += (k ? " " : "") + vocab[rng() % vocab.size()];
    const TokenSeq seq = encode(tok, query, sentence, 64);
    const std::size_t l = seq.size();

    // Independent validity from the sequence layout.
    std::vector<bool> sv(l), ev(l);
    for (std::size_t i = 0; i < l; ++i) {
      const bool text = i > seq.query_length && i + 1 < l && seq.ids[i] != kSepId && seq.ids[i] != kClsId;
      sv[i] = text && !seq.continuation[i];
      ev[i] = text && !seq.continuation[i + 1];
    }

    HeadOutputs raw;
    raw.s.resize(l);
    raw.e.resize(l);
    Tensor2 m(l, l);
    for (auto& v : raw.s) v = u(rng);
    for (auto& v : raw.e) v = u(rng);
    for (double& v : m.data()) v = u(rng);
    raw.m = m;
    const double t = 0.1 + 0.8 * u(rng);

    const StructuralMask mask = build_structural_mask(seq);
    HeadOutputs masked = raw;
    apply_structural_mask(masked, mask);
    for (std::size_t i = 0; i < l; ++i) {
      if (mask.start_valid[i] != sv[i] || mask.end_valid[i] != ev[i]) ++mismatches;
      if (!sv[i] && masked.s[i] != 0.0) ++leaks;
      if (!ev[i] && masked.e[i] != 0.0) ++leaks;
      for (std::size_t j = 0; j < l; ++j) {
        const bool ok = j >= i && sv[i] && ev[j];
        if (!ok && (*masked.m)(i, j) != 0.0) ++leaks;
        if (ok && (*masked.m)(i, j) != m(i, j)) ++leaks;
      }
    }

    const bool training = trial % 2 == 1;
    std::set<std::size_t> gs, ge;
    std::vector<Cell> spans;
    if (training) {
      for (std::size_t i = 0; i < l; ++i) {
        for (std::size_t j = i; j < l && spans.size() < 2; ++j) {
          if (sv[i] && ev[j] && u(rng) < 0.05) spans.push_back({i, j});
        }
      }
      for (const Cell& c : spans) {
        gs.insert(c.row);
        ge.insert(c.col);
      }
    }
    const GoldLabels gold = GoldLabels::from_spans(spans);
    const MaskedSelection sel =
        select_candidates(masked.s, masked.e, t, mask, &*masked.m, training ? &gold : nullptr);
    const auto expected = brute_selection(raw.s, raw.e, t, sv, ev, gs, ge);
    std::set<std::pair<std::size_t, std::size_t>> got;
    for (std::size_t k = 0; k < sel.cells.size(); ++k) {
      got.insert({sel.cells[k].row, sel.cells[k].col});
      if (sel.values[k] != m(sel.cells[k].row, sel.cells[k].col)) ++mismatches;
    }
    if (got != expected || got.size() != sel.cells.size()) ++mismatches;
  }
  Outcome o;
  o.pass = mismatches == 0 && leaks == 0;
  o.detail = fmt("500 instances, selection mismatches=%.0f, unmasked leaks=%.0f", static_cast<double>(mismatches),
                 static_cast<double>(leaks));
  return o;
}

// -------------------------------------------------------------------------------------------

Outcome decode_oracle() {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::size_t mismatches = 0, monotone_violations = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t l = 2 + rng() % 30;
    Tensor2 m(l, l);
    std::vector<std::vector<double>> mv(l, std::vector<double>(l));
    for (std::size_t i = 0; i < l; ++i)
      for (std::size_t j = 0; j < l; ++j) mv[i][j] = m(i, j) = u(rng);
    std::vector<double> s(l), e(l);
    for (auto& v : s) v = u(rng);
    for (auto& v : e) v = u(rng);
    StructuralMask mask{std::vector<bool>(l, true), std::vector<bool>(l, true)};
    for (std::size_t i = 0; i < l; ++i) {
      if (u(rng) < 0.2) mask.start_valid[i] = false;
      if (u(rng) < 0.2) mask.end_valid[i] = false;
    }
    const MaskedSelection sel = select_candidates(s, e, 0.5, mask, &m);
    const auto cand = brute_selection(s, e, 0.5, mask.start_valid, mask.end_valid);
    const double t_e = 0.05 + 0.9 * u(rng);
    std::optional<std::size_t> l_m;
    if (rng() % 3 != 0) l_m = 1 + rng() % l;

    std::set<std::tuple<std::size_t, std::size_t, double>> got;
    for (const ScoredSpan& sp : decode_spans(sel, {t_e, l_m})) got.insert({sp.start, sp.end, sp.score});
    if (got != brute_decode(mv, cand, t_e, l_m)) ++mismatches;

    std::set<std::pair<std::size_t, std::size_t>> prev;
    for (int k = 0; k < 10; ++k) {
      const double t = 0.05 + 0.09 * k;
      std::set<std::pair<std::size_t, std::size_t>> cur;
      for (const ScoredSpan& sp : decode_spans(sel, {t, l_m})) cur.insert({sp.start, sp.end});
      if (k > 0 && !std::includes(prev.begin(), prev.end(), cur.begin(), cur.end())) ++monotone_violations;
      prev = cur;
    }
  }
  Outcome o;
  o.pass = mismatches == 0 && monotone_violations == 0;
  o.detail = fmt("1000 instances, oracle mismatches=%.0f, monotonicity violations=%.0f",
                 static_cast<double>(mismatches), static_cast<double>(monotone_violations));
  return o;
}

// -------------------------------------------------------------------------------------------

Outcome worked_example_decode() {
  WorkedExample f = worked_example();
  const Extraction x = extract_from_outputs(f.seq, f.raw, "Protein", 0.5, {0.5, std::nullopt});
  std::vector<std::string> got;
  for (const SpanPrediction& p : x.entities) got.push_back(p.surface);
  std::sort(got.begin(), got.end());
  std::sort(f.expected.begin(), f.expected.end());

  HeadOutputs pointer_only = f.raw;
  pointer_only.m.reset();
  const Extraction y = extract_from_outputs(f.seq, pointer_only, "Protein", 0.5, {0.5, std::nullopt});

  Outcome o;
  o.pass = got == f.expected && std::count(got.begin(), got.end(), "PEBP2 alpha A1") == 1;
  o.detail = "2D decode: " + std::to_string(got.size()) + " entities [";
  for (std::size_t k = 0; k < got.size(); ++k) o.detail += (k ? " | " : "") + got[k];
  o.detail += "]; pointer-only decode: " + std::to_string(y.entities.size());
  return o;
}

// -------------------------------------------------------------------------------------------

Outcome loss_weighting() {
  constexpr double kTol = 1e-12;
  const double fs = 0.7321, fe = 0.2213, fm = 1.4142;
  bool ok = std::abs(weighted_loss(fs, fe, fm, 0.0) - 0.5 * (fs + fe)) < kTol &&
            std::abs(weighted_loss(fs, fe, fm, 1.0) - fm) < kTol &&
            std::abs(weighted_loss(fs, fe, fm, 0.1) - (0.45 * fs + 0.45 * fe + 0.1 * fm)) < kTol;
  const double ws = weighted_loss(1, 0, 0, 0.1), we = weighted_loss(0, 1, 0, 0.1), wm = weighted_loss(0, 0, 1, 0.1);
  ok = ok && std::abs(ws - 0.45) < kTol && std::abs(we - 0.45) < kTol && std::abs(wm - 0.1) < kTol;

  // Through the full loss path with constructed probabilities.
  const StructuralMask mask{std::vector<bool>(3, true), std::vector<bool>(3, true)};
  const std::vector<double> s = {0.8, 0.3, 0.6}, e = {0.2, 0.7, 0.9};
  Tensor2 m(3, 3, 0.0);
  m(0, 1) = 0.6;
  m(0, 2) = 0.3;
  m(2, 2) = 0.75;
  const GoldLabels gold = GoldLabels::from_spans({{0, 1}, {2, 2}});
  const MaskedSelection sel = select_candidates(s, e, 0.5, mask, &m, &gold);
  const double rs = ref_bce({0.8, 0.3, 0.6}, {1, 0, 1}, kBceEpsilon);
  const double re = ref_bce({0.2, 0.7, 0.9}, {0, 1, 1}, kBceEpsilon);
  const double rm = ref_bce({0.6, 0.3, 0.75}, {1, 0, 1}, kBceEpsilon);
  double worst = 0.0;
  for (double lambda : {0.0, 0.1, 1.0}) {
    const LossBreakdown lb = combined_loss(s, e, sel, gold, mask, {lambda, 0.5, kBceEpsilon});
    const double expect = (1 - lambda) / 2 * (rs + re) + lambda * rm;
    worst = std::max(worst, std::abs(lb.total - expect));
  }
  Outcome o;
  o.pass = ok && worst < kTol;
  o.detail = fmt("weights at 0.1 = %.2f/%.2f/%.2f", ws, we, wm);
  o.detail += fmt(", full-path max deviation %.1e", worst);
  return o;
}

// -------------------------------------------------------------------------------------------

std::vector<EntityKey> counted(std::size_t correct, std::size_t extra, std::size_t offset) {
  std::vector<EntityKey> out;
  for (std::size_t k = 0; k < correct + extra; ++k) out.push_back({k < correct ? k : offset + k, "T", 0, 1});
  return out;
}

Outcome metric_check() {
  constexpr double kTol = 1e-12;
  // P = 4862/5500 = 0.884, R = 4862/5525 = 0.880.
  const EvalReport r = evaluate(counted(4862, 638, 100000), counted(4862, 663, 200000));
  const double expected = 2 * 0.884 * 0.880 / (0.884 + 0.880);
  bool ok = std::abs(r.micro.precision - 0.884) < kTol && std::abs(r.micro.recall - 0.880) < kTol &&
            std::abs(r.micro.f1 - expected) < kTol && std::abs(100 * r.micro.f1 - 88.1995) < 5e-5;
  ok = ok && r.micro.f1 == r.macro.f1;

  std::mt19937_64 rng(5);
  const std::vector<std::string> types = {"A", "B", "C"};
  double worst = 0.0;
  bool single_type_equal = true;
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<EntityKey> pred, gold;
    const std::size_t nt = 1 + rng() % 3;
    for (int k = 0; k < 40; ++k) {
      const EntityKey key{rng() % 5, types[rng() % nt], rng() % 4, 4 + rng() % 4};
      if (rng() % 3) gold.push_back(key);
      if (rng() % 3) pred.push_back(key);
    }
    const EvalReport rep = evaluate(pred, gold);
    auto consistency = [&](const Scores& s) {
      const double f = s.precision + s.recall > 0 ? 2 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
      worst = std::max(worst, std::abs(f - s.f1));
    };
    consistency(rep.micro);
    for (const auto& [t, s] : rep.per_type) consistency(s);
    if (rep.per_type.size() == 1 && std::abs(rep.micro.f1 - rep.macro.f1) > kTol) single_type_equal = false;
  }
  Outcome o;
  o.pass = ok && single_type_equal && worst < kTol;
  o.detail = fmt("F1=%.4f (P=%.1f R=%.1f)", 100 * r.micro.f1, 100 * r.micro.precision, 100 * r.micro.recall);
  o.detail += fmt(", single-type micro=macro, self-consistency %.1e", worst);
  return o;
}

// -------------------------------------------------------------------------------------------

struct OverfitRun {
  EvalReport report;
  std::vector<SpanPrediction> predictions;
};

OverfitRun overfit(const SyntheticCorpus& corpus, bool two_dp) {
  std::vector<std::string> bpe_corpus;
  for (const DatasetSample& s : corpus.samples) bpe_corpus.push_back(s.text);
  for (const auto& [t, q] : corpus.queries.entries()) bpe_corpus.push_back(q);
  ModelConfig mc;  // d=64, 2 layers
  mc.two_dp = two_dp;
  TrainConfig tc;
  tc.epochs = 200;
  tc.seed = 1;
  Model model = Model::create(mc, train_bpe(bpe_corpus, 300), corpus.queries, tc.seed);
  const PreparedUnits units = prepare_units(model, corpus.samples);
  train(model, units.units, tc);
  OverfitRun run;
  run.predictions = predict(model, corpus.samples, {});
  run.report = evaluate(run.predictions, gold_keys(corpus.samples));
  return run;
}

Outcome end_to_end_overfit() {
  constexpr double kMinF1 = 0.95;
  const SyntheticCorpus corpus = make_synthetic_corpus(50, 7);
  std::set<std::string> types;
  for (const auto& s : corpus.samples)
    for (const auto& g : s.entities) types.insert(g.type);
  const double rate = nesting_rate(corpus.samples);

  const OverfitRun full = overfit(corpus, true);
  const OverfitRun ablated = overfit(corpus, false);

  auto predicted = [](const OverfitRun& run) {
    std::set<EntityKey> keys;
    for (const SpanPrediction& p : run.predictions) keys.insert({p.sentence, p.type, p.start_char, p.end_char});
    return keys;
  };
  const auto full_keys = predicted(full);
  const auto ablated_keys = predicted(ablated);
  std::size_t nested_pairs_recovered = 0, nested_missed_by_ablation = 0, nested_total = 0;
  std::set<EntityKey> nested_spans;
  for (std::size_t i = 0; i < corpus.samples.size(); ++i) {
    for (const auto& [outer, inner] : nested_pairs(corpus.samples[i])) {
      ++nested_total;
      const EntityKey ko{i, outer.type, outer.start, outer.end}, ki{i, inner.type, inner.start, inner.end};
      if (full_keys.count(ko) && full_keys.count(ki)) ++nested_pairs_recovered;
      nested_spans.insert(ko);
      nested_spans.insert(ki);
    }
  }
  for (const EntityKey& k : nested_spans) nested_missed_by_ablation += ablated_keys.count(k) == 0;

  Outcome o;
  o.pass = corpus.samples.size() == 50 && types.size() == 3 && rate >= 0.2 && full.report.micro.f1 >= kMinF1 &&
           nested_pairs_recovered >= 1 && nested_missed_by_ablation >= 1;
  o.detail = fmt("nesting %.1f%%, micro-F1 %.4f (no-2dp %.4f)", 100 * rate, full.report.micro.f1,
                 ablated.report.micro.f1);
  o.detail += ", nested pairs recovered " + std::to_string(nested_pairs_recovered) + "/" +
              std::to_string(nested_total) + ", nested spans missed without 2D head " +
              std::to_string(nested_missed_by_ablation) + "/" + std::to_string(nested_spans.size());
  return o;
}

// -------------------------------------------------------------------------------------------

Outcome persistence() {
  bool ok = true;
  std::string detail;

  const Model m = tiny_model(42);
  const std::string bytes = serialize_checkpoint(m);
  const Model back = parse_checkpoint(bytes);
  ok = ok && serialize_checkpoint(back) == bytes;
  const auto a = m.named_parameters(), b = back.named_parameters();
  for (std::size_t k = 0; k < a.size(); ++k) {
    ok = ok && std::memcmp(a[k].second->data().data(), b[k].second->data().data(),
                           a[k].second->size() * sizeof(double)) == 0;
  }
  detail += "checkpoint " + std::string(ok ? "bitwise" : "DIFFERS");

  const SyntheticCorpus corpus = make_synthetic_corpus(12, 3);
  std::vector<std::string> lines;
  for (const auto& s : corpus.samples) lines.push_back(s.text);
  const MergeTable tok = train_bpe(lines, 120);
  const MergeTable tok_back = MergeTable::parse(tok.serialize());
  bool bpe_ok = tok_back == tok && tok_back.serialize() == tok.serialize();
  for (const auto& s : corpus.samples) bpe_ok = bpe_ok && encode(tok, "q", s.text) == encode(tok_back, "q", s.text);
  ok = ok && bpe_ok;
  detail += std::string(", bpe ") + (bpe_ok ? "bitwise" : "DIFFERS");

  auto seeded_run = [&] {
    ModelConfig mc;
    mc.dim = 16;
    mc.heads = 2;
    mc.ffn = 32;
    TrainConfig tc;
    tc.epochs = 3;
    tc.seed = 11;
    Model model = Model::create(mc, tok, corpus.queries, tc.seed);
    train(model, prepare_units(model, corpus.samples).units, tc);
    const EvalReport r = evaluate(predict(model, corpus.samples, {0.3, std::nullopt}), gold_keys(corpus.samples));
    return std::make_pair(serialize_checkpoint(model), r.csv() + r.table());
  };
  const auto r1 = seeded_run();
  const auto r2 = seeded_run();
  const bool det = r1 == r2;
  ok = ok && det;
  detail += std::string(", seeded runs ") + (det ? "identical" : "DIFFER");
  return {ok, detail};
}

}  // namespace

int main() {
  std::printf("span2d acceptance suite\n");
  report("activation-identities", 1, activation_identities);
  report("gradient-suite", 120, gradient_suite);
  report("mask-invariants", 10, mask_invariants);
  report("decode-oracle", 10, decode_oracle);
  report("worked-example-5-spans", 1, worked_example_decode);
  report("loss-weighting", 1, loss_weighting);
  report("metric-check", 1, metric_check);
  report("end-to-end-overfit", 600, end_to_end_overfit);
  report("persistence", 60, persistence);
  std::printf("%d criteria failed\n", g_failures);
  return g_failures == 0 ? 0 : 1;
}

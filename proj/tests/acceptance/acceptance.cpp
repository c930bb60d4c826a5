// Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any fails.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "ctxcap/corpus/align.hpp"
#include "ctxcap/corpus/manifest.hpp"
#include "ctxcap/corpus/overlap.hpp"
#include "ctxcap/corpus/script.hpp"
#include "ctxcap/corpus/subtitles.hpp"
#include "ctxcap/corpus/tokenize.hpp"
#include "ctxcap/corpus/vocab.hpp"
#include "ctxcap/decoding.hpp"
#include "ctxcap/grad_suite.hpp"
#include "ctxcap/harness/synthetic.hpp"
#include "ctxcap/harness/train.hpp"
#include "ctxcap/metrics/cider.hpp"
#include "ctxcap/metrics/diagnostics.hpp"
#include "ctxcap/metrics/meteor.hpp"
#include "ctxcap/metrics/rouge.hpp"
#include "ctxcap/model.hpp"
#include "metric_oracles.hpp"
#include "search_oracles.hpp"

using namespace ctxcap;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Verdict {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      if (!pass) detail << "; ";
      detail << what;
      pass = false;
    }
  }
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v, int prec = 4) {
  std::ostringstream s;
  s << std::setprecision(prec) << v;
  return s.str();
}

// ---------------------------------------------------------------- gradients

Verdict gradient_fidelity() {
  Verdict v;
  const auto t0 = Clock::now();
  const auto entries = run_grad_suite(1, 8);
  const double secs = seconds_since(t0);
  double worst = 0.0;
  std::string worst_name;
  for (const auto& e : entries) {
    if (e.result.max_relative_error > worst || worst_name.empty()) {
      worst = e.result.max_relative_error;
      worst_name = e.name;
    }
    v.require(e.result.max_relative_error < 1e-4, e.name + " rel err " + fmt(e.result.max_relative_error));
  }
  v.require(secs < 120.0, "took " + fmt(secs) + " s");
  if (v.pass)
    v.detail << entries.size() << " checks, worst " << worst_name << " " << fmt(worst, 3) << ", " << fmt(secs, 3)
             << " s";
  return v;
}

// ------------------------------------------------------- distributions

ModelConfig random_tiny_config(Rng& rng, std::size_t vocab_size) {
  ModelConfig c;
  c.s2vt.enc_steps = 2 + rng.below(4);
  c.s2vt.dec_steps = 10;
  c.s2vt.video_feature_dim = 2 + rng.below(5);
  c.s2vt.video_embed_dim = 2 + rng.below(5);
  c.s2vt.word_embed_dim = 2 + rng.below(5);
  c.s2vt.hidden_dim = 2 * (1 + rng.below(4));
  c.s2vt.attention_dim = 2 + rng.below(5);
  c.context_hidden = 2 + rng.below(5);
  c.context_attention_dim = 2 + rng.below(5);
  c.vocab_hidden = 2 + rng.below(5);
  c.max_context_len = 12;
  c.vocab_size = vocab_size;
  c.dropout = 0.0;
  return c;
}

Tensor<float> random_features(Rng& rng, std::size_t n, std::size_t f) {
  Tensor<float> t({n, f});
  for (auto& x : t.values()) x = static_cast<float>(rng.uniform(-2.0, 2.0));
  return t;
}

std::vector<std::string> random_context(Rng& rng, std::size_t max_len) {
  static const std::vector<std::string> pool = {"the", "walks", "into", "kitchen", ".", "homer", "marge", "moe", "bart"};
  std::vector<std::string> ctx;
  for (std::size_t n = 1 + rng.below(max_len); n > 0; --n) ctx.push_back(pool[rng.below(pool.size())]);
  return ctx;
}

Verdict distribution_invariants() {
  Verdict v;
  const auto vocab = corpus::Vocabulary::from_words({"the", "walks", "into", "kitchen", "."});
  Rng rng(2024);
  std::size_t steps = 0;
  double worst_p = 0.0, worst_xi = 0.0, worst_eta = 0.0;
  double min_gen = 1.0, max_gen = 0.0;
  for (std::uint64_t m = 0; steps < 1000; ++m) {
    const auto cfg = random_tiny_config(rng, vocab.size());
    CaptionModel<double> model(cfg, 100 + m);
    for (auto& [name, t] : model.params())
      for (auto& x : t.values()) x = rng.uniform(-1.5, 1.5);
    const PreparedSample sample(random_features(rng, 1 + rng.below(cfg.s2vt.enc_steps), cfg.s2vt.video_feature_dim),
                                vocab, random_context(rng, cfg.max_context_len), {});
    ModelStepper<double> stepper(model, sample, Variant::full);
    auto state = stepper.initial();
    std::size_t token = corpus::kBos;
    for (int t = 0; t < 10 && steps < 1000; ++t, ++steps) {
      const auto out = stepper.step(state, token);
      double zp = 0.0, zx = 0.0, ze = 0.0;
      for (double p : out.probs) zp += p;
      for (double p : out.xi) zx += p;
      for (double p : out.eta) ze += p;
      worst_p = std::max(worst_p, std::abs(zp - 1.0));
      worst_xi = std::max(worst_xi, std::abs(zx - 1.0));
      worst_eta = std::max(worst_eta, std::abs(ze - 1.0));
      min_gen = std::min(min_gen, out.p_gen);
      max_gen = std::max(max_gen, out.p_gen);
      state = out.next;
      token = rng.below(stepper.vocab_size());
    }
  }
  v.require(worst_p < 1e-6, "|sum p_final - 1| = " + fmt(worst_p));
  v.require(worst_xi <= 1e-9, "|sum xi - 1| = " + fmt(worst_xi));
  v.require(worst_eta <= 1e-9, "|sum eta - 1| = " + fmt(worst_eta));
  v.require(min_gen > 0.0 && max_gen < 1.0, "p_gen range [" + fmt(min_gen) + ", " + fmt(max_gen) + "]");
  if (v.pass)
    v.detail << steps << " steps; max deviations p " << fmt(worst_p, 2) << ", xi " << fmt(worst_xi, 2) << ", eta "
             << fmt(worst_eta, 2) << "; p_gen in [" << fmt(min_gen, 3) << ", " << fmt(max_gen, 3) << "]";
  return v;
}

// ------------------------------------------------------------- p_gen limits

Verdict pgen_limits() {
  Verdict v;
  const auto vocab = corpus::Vocabulary::from_words({"a", "b", "c"});
  const std::vector<std::vector<std::string>> contexts = {
      {"b", "zed", "b"}, {"x", "y", "x", "a", "y"}, {"a"}, {"q"}, {"c", "c", "c", "r", "s", "r"}};
  Rng rng(13);
  std::size_t fixtures = 0;
  for (const auto& ctx : contexts) {
    for (int rep = 0; rep < 4; ++rep, ++fixtures) {
      pointer::ExtendedVocab ext(vocab, ctx);
      Tensor<double> pv({vocab.size()});
      Tensor<double> xi({ctx.size()});
      double z = 0.0;
      for (auto& x : pv.values()) z += (x = rng.uniform(0.01, 1.0));
      for (auto& x : pv.values()) x /= z;
      z = 0.0;
      for (auto& x : xi.values()) z += (x = rng.uniform(0.01, 1.0));
      for (auto& x : xi.values()) x /= z;

      // Independent expectations.
      std::vector<double> want_gen(ext.size(), 0.0), want_copy(ext.size(), 0.0);
      for (std::size_t y = 0; y < vocab.size(); ++y) want_gen[y] = pv[y];
      for (std::size_t i = 0; i < ctx.size(); ++i) want_copy[*ext.find(ctx[i])] += xi[i];

      Tape<double> tape;
      const auto gen = pointer::final_distribution(tape.constant(pv), tape.constant(xi),
                                                   tape.constant(Tensor<double>::scalar(1.0)), ext);
      const auto copy = pointer::final_distribution(tape.constant(pv), tape.constant(xi),
                                                    tape.constant(Tensor<double>::scalar(0.0)), ext);
      for (std::size_t y = 0; y < ext.size(); ++y) {
        if (gen.value()[y] != want_gen[y]) v.require(false, "p_gen=1 differs at id " + std::to_string(y));
        if (copy.value()[y] != want_copy[y]) v.require(false, "p_gen=0 differs at id " + std::to_string(y));
      }
    }
  }
  if (v.pass) v.detail << fixtures << " fixtures, exact equality in both limits";
  return v;
}

// -------------------------------------------------------- synthetic runs

struct SyntheticRuns {
  harness::Dataset ds;
  harness::ExperimentConfig cfg;
  harness::AblationResult full, context_only, video_only, full_again;
  double full_seconds = 0.0;
};

SyntheticRuns& synthetic_runs() {
  static SyntheticRuns runs = [] {
    SyntheticRuns r;
    harness::SyntheticTaskSpec spec;  // vocab 50, 200 OOV names, 2000 train clips, seed 1
    const auto data = harness::generate_synthetic(spec);
    r.cfg = harness::preset("synthetic");
    r.ds = harness::dataset_from_synthetic(data, r.cfg.model.max_context_len);
    auto t0 = Clock::now();
    r.full = harness::run_ablation(r.cfg, r.ds, Variant::full);
    r.full_seconds = seconds_since(t0);
    r.context_only = harness::run_ablation(r.cfg, r.ds, Variant::context_only);
    r.video_only = harness::run_ablation(r.cfg, r.ds, Variant::video_only);
    return r;
  }();
  return runs;
}

Verdict copy_efficacy() {
  Verdict v;
  auto& r = synthetic_runs();
  const double names_full = r.full.report.corpus.at("names");
  const double names_video = r.video_only.report.corpus.at("names");
  const double rf = r.full.report.corpus.at("rouge"), rc = r.context_only.report.corpus.at("rouge"),
               rv = r.video_only.report.corpus.at("rouge");
  v.require(r.ds.vocab->size() <= 50, "global vocabulary has " + std::to_string(r.ds.vocab->size()) + " entries");
  v.require(names_full >= 0.90, "full name recovery " + fmt(names_full));
  v.require(r.full_seconds < 1800.0, "full run took " + fmt(r.full_seconds) + " s");
  v.require(names_video == 0.0, "video_only name recovery " + fmt(names_video));
  v.require(rf > rc && rc > rv, "ROUGE-L full " + fmt(rf) + ", context_only " + fmt(rc) + ", video_only " + fmt(rv));
  if (v.pass)
    v.detail << "names full " << fmt(names_full) << " (train+decode " << fmt(r.full_seconds, 3) << " s), video_only "
             << names_video << "; ROUGE-L " << fmt(rf) << " > " << fmt(rc) << " > " << fmt(rv);
  return v;
}

Verdict determinism() {
  Verdict v;
  auto& r = synthetic_runs();
  r.full_again = harness::run_ablation(r.cfg, r.ds, Variant::full);
  const auto& a = r.full;
  const auto& b = r.full_again;
  v.require(a.training.batch_losses == b.training.batch_losses, "step losses differ");
  bool curves = a.training.curve.size() == b.training.curve.size();
  for (std::size_t i = 0; curves && i < a.training.curve.size(); ++i)
    curves = a.training.curve[i].train_loss == b.training.curve[i].train_loss &&
             a.training.curve[i].val_loss == b.training.curve[i].val_loss;
  v.require(curves, "epoch curves differ");
  bool captions = a.generations.size() == b.generations.size();
  for (std::size_t i = 0; captions && i < a.generations.size(); ++i)
    captions = a.generations[i].tokens == b.generations[i].tokens;
  v.require(captions, "generated captions differ");
  if (v.pass)
    v.detail << a.training.batch_losses.size() << " optimizer steps and " << a.generations.size()
             << " captions identical across two runs";
  return v;
}

// ------------------------------------------------------------------ coverage

Verdict coverage_effect() {
  Verdict v;
  harness::SyntheticTaskSpec spec;
  spec.list_length = 14;
  spec.train = 1000;
  spec.val = 100;
  spec.test = 200;
  const auto data = harness::generate_synthetic(spec);
  auto cfg = harness::preset("synthetic");
  cfg.model.s2vt.dec_steps = 30;
  cfg.model.max_context_len = 60;
  cfg.repetition_beta = 1.0;  // no inference-time penalty: measure the trained attention alone
  const auto ds = harness::dataset_from_synthetic(data, cfg.model.max_context_len);
  double rep[2], rouge[2];
  for (int k = 0; k < 2; ++k) {
    cfg.model.coverage_lambda = k == 0 ? 0.0 : 1.0;
    const auto r = harness::run_ablation(cfg, ds, Variant::full);
    rep[k] = r.report.corpus.at("rep");
    rouge[k] = r.report.corpus.at("rouge");
    v.require(r.generations.size() >= 200, "only " + std::to_string(r.generations.size()) + " eval samples");
  }
  v.require(rep[1] < rep[0], "mean repetition_rate lambda=1 " + fmt(rep[1]) + " vs lambda=0 " + fmt(rep[0]) +
                                 " (ROUGE-L " + fmt(rouge[1]) + " vs " + fmt(rouge[0]) + ")");
  if (v.pass) v.detail << "mean repetition_rate " << fmt(rep[1]) << " (lambda=1) < " << fmt(rep[0]) << " (lambda=0)";
  return v;
}

// ------------------------------------------------------------------ decoding

Verdict decoding_checks() {
  using namespace ctxcap::testing;
  Verdict v;
  const auto vocab = corpus::Vocabulary::from_words({"the", "walks", "into", "kitchen", "."});
  const auto exempt = decoding::exempt_ids(vocab);
  Rng rng(77);
  std::size_t beam_eq = 0, penalty_outputs = 0;
  for (std::uint64_t i = 0; i < 100; ++i) {
    const auto cfg = random_tiny_config(rng, vocab.size());
    CaptionModel<double> model(cfg, 500 + i);
    for (auto& [name, t] : model.params())
      for (auto& x : t.values()) x = rng.uniform(-1.5, 1.5);
    const PreparedSample sample(random_features(rng, cfg.s2vt.enc_steps, cfg.s2vt.video_feature_dim), vocab,
                                random_context(rng, cfg.max_context_len), {});
    const Variant variant = std::array{Variant::full, Variant::video_only, Variant::context_only}[i % 3];
    decoding::DecodeConfig dc;
    dc.max_len = 8;
    dc.exempt = exempt;
    dc.repetition_beta = rng.uniform(0.0, 1.0);
    ModelStepper<double> s1(model, sample, variant), s2(model, sample, variant);
    const auto g = decoding::greedy_decode(s1, dc);
    const auto b = decoding::beam_search(s2, dc);
    if (g.tokens == b.tokens) ++beam_eq;
    else v.require(false, "beam 1 != greedy on model " + std::to_string(i));

    for (std::size_t width : {1u, 3u}) {
      auto d0 = dc;
      d0.repetition_beta = 0.0;
      d0.beam_width = width;
      ModelStepper<double> s3(model, sample, variant);
      const auto r = decoding::decode(s3, d0);
      std::set<std::size_t> seen;
      for (auto id : r.tokens)
        if (!exempt.count(id) && !seen.insert(id).second) v.require(false, "beta=0 output repeats id " + std::to_string(id));
      ++penalty_outputs;
    }
  }

  std::size_t exhaustive_ok = 0, instances = 0;
  for (std::uint64_t seed = 1; seed <= 60; ++seed) {
    TableModel m;
    m.vocab = 3 + seed % 3;  // extended vocabulary of 3..5 ids
    m.table = [&, seed](const TableModel::State& s) { return hashed_probs(s, m.vocab, seed); };
    decoding::DecodeConfig dc;
    dc.max_len = 1 + seed % 4;
    dc.beam_width = 1 + seed % 7;
    dc.repetition_beta = (seed % 5) / 4.0;
    dc.exempt = {kEos};
    // A beam at least as wide as the number of live prefixes is exhaustive.
    std::size_t live = 1;
    for (std::size_t t = 0; t + 1 < dc.max_len; ++t) live *= m.vocab;
    dc.beam_width = std::max<std::size_t>(dc.beam_width, live * m.vocab);
    const auto want = exhaustive(m, dc);
    const auto got = decoding::beam_search(m, dc);
    ++instances;
    if (got.tokens == want.tokens && std::abs(got.score - want.score) < 1e-12) ++exhaustive_ok;
    else v.require(false, "beam != exhaustive argmax on instance " + std::to_string(seed));
  }
  if (v.pass)
    v.detail << "beam1==greedy " << beam_eq << "/100; exhaustive argmax " << exhaustive_ok << "/" << instances
             << "; beta=0 repetition-free on " << penalty_outputs << " outputs";
  return v;
}

// ------------------------------------------------------------------ metrics

Verdict metric_oracles() {
  using namespace ctxcap::testing;
  using metrics::Tokens;
  Verdict v;
  Rng rng(12);
  std::size_t rouge_ok = 0;
  for (int i = 0; i < 1000; ++i) {
    Tokens a = random_sentence(rng, 10, 6), b = random_sentence(rng, 10, 6);
    if (b.empty()) b.push_back("w0");
    const std::size_t l = lcs_brute_force(a, b);
    double want = 0.0;
    if (l > 0) {
      const double p = static_cast<double>(l) / static_cast<double>(a.size());
      const double r = static_cast<double>(l) / static_cast<double>(b.size());
      want = (1 + 1.44) * p * r / (r + 1.44 * p);
    }
    if (metrics::lcs_length(a, b) == l && metrics::rouge_l(a, b) == want) ++rouge_ok;
  }
  v.require(rouge_ok == 1000, "ROUGE-L matched " + std::to_string(rouge_ok) + "/1000");

  const auto tok = [](const std::string& s) { return corpus::tokenize(s); };
  const double s1 = (0.5 + 0.5) / 4.0;
  const double s2 = std::exp(-1.0 / 72.0) * (4.0 / std::sqrt(6.0) + 1.0 / std::sqrt(2.0)) / 4.0;
  const auto c = metrics::cider({tok("a man runs"), tok("a dog barks")},
                                std::vector<Tokens>{tok("a man walks"), tok("a dog barks loudly")});
  const double cider_err = std::max({std::abs(c.per_sample[0] - s1), std::abs(c.per_sample[1] - s2),
                                     std::abs(c.corpus - (s1 + s2) / 2.0)});
  v.require(cider_err < 1e-9, "CIDEr off by " + fmt(cider_err));

  double meteor_err = 0.0;
  for (const auto& mc : meteor_cases()) {
    const Tokens cand = tok(mc.cand), ref = tok(mc.ref);
    const auto b = metrics::meteor_lite_breakdown(cand, ref);
    if (b.matches != mc.m || b.chunks != mc.chunks) {
      v.require(false, "METEOR alignment of '" + mc.cand + "'");
      continue;
    }
    if (mc.m == 0) {
      meteor_err = std::max(meteor_err, std::abs(b.score));
      continue;
    }
    const double p = static_cast<double>(mc.m) / static_cast<double>(cand.size());
    const double r = static_cast<double>(mc.m) / static_cast<double>(ref.size());
    const double f = p * r / (0.9 * p + 0.1 * r);
    const double frag = static_cast<double>(mc.chunks) / static_cast<double>(mc.m);
    const double pen = 0.5 * frag * frag * frag;
    meteor_err = std::max({meteor_err, std::abs(b.f_mean - f), std::abs(b.penalty - pen),
                           std::abs(b.score - f * (1.0 - pen))});
  }
  v.require(meteor_err < 1e-9, "METEOR off by " + fmt(meteor_err));
  if (v.pass)
    v.detail << "ROUGE-L 1000/1000 exact; CIDEr err " << fmt(cider_err, 2) << "; METEOR " << meteor_cases().size()
             << " fixtures err " << fmt(meteor_err, 2);
  return v;
}

// ------------------------------------------------------------------ pipeline

Verdict pipeline() {
  using namespace ctxcap::corpus;
  Verdict v;
  const fs::path data(CTXCAP_TEST_DATA);

  std::size_t srt = 0;
  for (const auto& entry : fs::directory_iterator(data / "srt")) {
    const auto first = parse_srt(read_text_file(entry.path()));
    const std::string once = serialize_srt(first);
    const auto second = parse_srt(once);
    v.require(second == first && serialize_srt(second) == once, "SRT fixpoint fails on " + entry.path().string());
    ++srt;
  }
  v.require(srt == 20, "found " + std::to_string(srt) + " SRT fixtures");

  const auto doc = parse_script(read_text_file(data / "three_scenes.txt"));
  const auto m = align_script_to_time(doc, subtitles_from_script(doc));
  v.require(m.score == 1.0, "self-alignment score " + fmt(m.score));

  struct Clip {
    std::string movie;
    double overlap;
  };
  const auto kept = [](const std::vector<Clip>& clips, double threshold) {
    std::set<std::string> out;
    for (const auto& c : filter_movies(
             clips, threshold, [](const Clip& c) { return c.movie; }, [](const Clip& c) { return c.overlap; }))
      out.insert(c.movie);
    return out;
  };
  // movie means: m030 0.30, m040 0.40, edge 0.90, high 0.95, low 0.895
  const std::vector<Clip> clips = {{"m030", 0.2}, {"m030", 0.4}, {"m030", 0.3}, {"m040", 0.5}, {"m040", 0.3},
                                   {"edge", 0.9}, {"edge", 0.9}, {"high", 1.0}, {"high", 0.9}, {"low", 0.85},
                                   {"low", 0.94}};
  v.require(kept(clips, 1.0 / 3.0) == std::set<std::string>{"m040", "edge", "high", "low"},
            "threshold 1/3 keeps the wrong movies");
  v.require(kept(clips, 0.9) == std::set<std::string>{"edge", "high"}, "threshold 0.9 keeps the wrong movies");

  Rng rng(8);
  std::vector<std::vector<std::string>> docs(50);
  for (auto& d : docs)
    for (std::size_t k = 0; k < 20; ++k) d.push_back("w" + std::to_string(rng.below(40)));
  const auto va = build_vocab(docs, 30), vb = build_vocab(docs, 30);
  v.require(va == vb && va.words() == vb.words(), "vocabulary build is not deterministic");
  if (v.pass)
    v.detail << srt << " SRT fixpoints; self-alignment 1.0; filter_movies at 1/3 and 0.9 as specified; "
             << "vocabulary deterministic";
  return v;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
      {"gradient fidelity", gradient_fidelity},
      {"distribution invariants", distribution_invariants},
      {"p_gen limits", pgen_limits},
      {"copy-mechanism efficacy", copy_efficacy},
      {"coverage effect", coverage_effect},
      {"decoding", decoding_checks},
      {"metric oracles", metric_oracles},
      {"pipeline", pipeline},
      {"determinism", determinism},
  };
  std::size_t failed = 0;
  for (const auto& [name, check] : criteria) {
    Verdict v;
    try {
      v = check();
    } catch (const std::exception& e) {
      v.pass = false;
      v.detail << "exception: " << e.what();
    }
    failed += !v.pass;
    std::cout << (v.pass ? "PASS " : "FAIL ") << name << ": " << v.detail.str() << std::endl;
  }
  std::cout << (criteria.size() - failed) << "/" << criteria.size() << " criteria passed" << std::endl;
  return failed == 0 ? 0 : 1;
}

#pragma once

#include <algorithm>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "ctxcap/adam.hpp"
#include "ctxcap/corpus/vocab.hpp"
#include "ctxcap/decoding.hpp"
#include "ctxcap/harness/config.hpp"
#include "ctxcap/harness/dataset.hpp"
#include "ctxcap/metrics/report.hpp"
#include "ctxcap/model.hpp"
#include "ctxcap/params.hpp"

namespace ctxcap::harness {

using Model = CaptionModel<float>;

inline Model make_model(const ExperimentConfig& cfg, const Dataset& ds) {
  ModelConfig mc = cfg.model;
  mc.vocab_size = ds.vocab->size();
  Model model(mc, cfg.seed);
  if (!cfg.load_checkpoint.empty()) model = Model(mc, load_checkpoint<float>(cfg.load_checkpoint));
  return model;
}

inline bool has_prefix(const std::string& s, std::initializer_list<const char*> prefixes) {
  for (const char* p : prefixes)
    if (s.rfind(p, 0) == 0) return true;
  return false;
}

// Parameters only the text branch touches.
inline bool is_pointer_only(const std::string& name) {
  return has_prefix(name, {"context_lstm.", "pointer_att.", "pgen."});
}
inline bool is_top_lstm(const std::string& name) { return has_prefix(name, {"top_lstm."}); }

inline Variant stage_variant(Stage s, Variant v) { return s == Stage::pretrain_s2vt ? Variant::video_only : v; }

inline std::set<std::string> frozen_for(const ParamStore<float>& params, Stage s, const ExperimentConfig& cfg) {
  const Variant v = stage_variant(s, cfg.variant);
  std::set<std::string> out;
  for (const auto& [name, _] : params) {
    if (v == Variant::video_only && is_pointer_only(name)) out.insert(name);
    if ((s == Stage::frozen_top || cfg.freeze_top_lstm) && is_top_lstm(name)) out.insert(name);
  }
  return out;
}

struct EpochLog {
  std::string stage;
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct TrainResult {
  std::vector<EpochLog> curve;
  std::vector<double> batch_losses;  // every optimizer step, in order
  std::map<std::string, std::set<std::string>> frozen;  // stage -> frozen parameters
  bool frozen_unchanged = true;  // checksums of frozen parameters equal across each stage
};

// Mean teacher-forced loss over a split, without dropout.
inline double evaluate_loss(Model& model, const std::vector<Example>& split, Variant variant) {
  if (split.empty()) return 0.0;
  Rng unused(0);
  double total = 0.0;
  for (const auto& ex : split) {
    Tape<float> tape;
    total += static_cast<double>(model.loss(tape, ex.sample, variant, false, unused).loss.item());
  }
  return total / static_cast<double>(split.size());
}

// Runs the stage sequence. Each stage restarts Adam, shuffles with its own
// derived stream, stops early after `patience` epochs without validation
// improvement, and ends on its best-validation parameters.
inline TrainResult train(Model& model, const Dataset& ds, const ExperimentConfig& cfg, std::ostream* log = nullptr) {
  cfg.validate();
  if (ds.train.empty()) throw corpus::DataError("train: empty training split");
  TrainResult res;
  auto& params = model.params();
  double last_finite = 0.0;
  std::size_t step_no = 0;

  for (std::size_t si = 0; si < cfg.stages.size(); ++si) {
    const StagePlan plan = cfg.stages[si];
    const Variant variant = stage_variant(plan.stage, cfg.variant);
    const std::set<std::string> frozen = frozen_for(params, plan.stage, cfg);
    res.frozen[stage_name(plan.stage)] = frozen;
    std::map<std::string, std::uint64_t> sums;
    for (const auto& name : frozen) sums[name] = checksum(params.at(name));

    AdamState adam;
    adam.learning_rate = cfg.learning_rate;
    adam.clip_norm = cfg.clip_norm;
    adam.frozen = frozen;
    Rng rng = Rng::derive(cfg.seed, 1000 + static_cast<std::uint64_t>(plan.stage));

    ParamStore<float> best = params;
    double best_val = std::numeric_limits<double>::infinity();
    std::size_t since_best = 0;
    const bool have_val = !ds.val.empty();

    for (std::size_t epoch = 1; epoch <= plan.max_epochs; ++epoch) {
      std::vector<std::size_t> order(ds.train.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      rng.shuffle(order);
      double epoch_loss = 0.0;
      for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
        const std::size_t end = std::min(order.size(), start + cfg.batch_size);
        const float inv = 1.0f / static_cast<float>(end - start);
        params.zero_grad();
        for (auto& [name, p] : params)
          if (!frozen.count(name)) p.grad();
        double batch = 0.0;
        for (std::size_t k = start; k < end; ++k) {
          Tape<float> tape;
          auto lr = model.loss(tape, ds.train[order[k]].sample, variant, true, rng, frozen);
          const double l = static_cast<double>(lr.loss.item());
          if (!std::isfinite(l)) {
            std::ostringstream msg;
            msg << "non-finite loss in stage " << stage_name(plan.stage) << ", epoch " << epoch << ", step " << step_no
                << " (clip " << ds.train[order[k]].clip_id << "); last finite batch loss " << last_finite;
            throw NumericError(msg.str());
          }
          batch += l;
          tape.backward(scale(lr.loss, inv));
        }
        batch /= static_cast<double>(end - start);
        adam_step(params, adam);
        last_finite = batch;
        res.batch_losses.push_back(batch);
        epoch_loss += batch * static_cast<double>(end - start);
        ++step_no;
      }
      epoch_loss /= static_cast<double>(order.size());
      const double val = have_val ? evaluate_loss(model, ds.val, variant) : epoch_loss;
      res.curve.push_back({stage_name(plan.stage), epoch, epoch_loss, val});
      if (log)
        *log << stage_name(plan.stage) << " epoch " << epoch << " train " << epoch_loss << " val " << val << std::endl;
      if (val < best_val) {
        best_val = val;
        best = params;
        since_best = 0;
      } else if (++since_best >= cfg.patience) {
        break;
      }
    }
    params = std::move(best);
    for (const auto& [name, sum] : sums)
      if (checksum(params.at(name)) != sum) res.frozen_unchanged = false;
  }
  return res;
}

struct Generation {
  std::string clip_id;
  std::size_t example = 0;          // index into the split of the context document used
  std::vector<std::string> tokens;  // EOS removed
  double score = 0.0;
};

inline std::vector<std::string> strip_eos(std::vector<std::string> t) {
  if (!t.empty() && t.back() == corpus::kSpecialTokens[corpus::kEos]) t.pop_back();
  return t;
}

inline decoding::DecodeResult decode_example(Model& model, const Example& ex, Variant variant,
                                             const decoding::DecodeConfig& dc) {
  ModelStepper<float> stepper(model, ex.sample, variant);
  return decoding::decode(stepper, dc);
}

// One caption per distinct clip, in order of first appearance. A clip with
// several context documents is decoded once per document and the most
// probable caption kept. Decoding only reads the model, so clips are spread
// over `threads` workers; the result does not depend on the thread count.
inline std::vector<Generation> generate_split(Model& model, const std::vector<Example>& split, Variant variant,
                                              const decoding::DecodeConfig& dc, std::size_t threads = 1) {
  std::vector<std::vector<std::size_t>> groups;
  std::map<std::string, std::size_t> group_of;
  for (std::size_t i = 0; i < split.size(); ++i) {
    auto [it, fresh] = group_of.try_emplace(split[i].clip_id, groups.size());
    if (fresh) groups.emplace_back();
    groups[it->second].push_back(i);
  }
  std::vector<Generation> out(groups.size());
  auto work = [&](std::size_t first, std::size_t stride) {
    for (std::size_t g = first; g < groups.size(); g += stride) {
      std::vector<decoding::DecodeResult> results;
      for (std::size_t i : groups[g]) results.push_back(decode_example(model, split[i], variant, dc));
      const std::size_t best = decoding::best_of(results);
      const Example& ex = split[groups[g][best]];
      out[g] = {ex.clip_id, groups[g][best], strip_eos(decoding::resolve_tokens(results[best].tokens, ex.sample.ext)),
                results[best].score};
    }
  };
  threads = std::max<std::size_t>(1, std::min(threads, groups.size()));
  if (threads == 1) {
    work(0, 1);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(threads);
    for (std::size_t t = 0; t < threads; ++t)
      pool.emplace_back([&, t] {
        try {
          work(t, threads);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    for (auto& th : pool) th.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }
  return out;
}

inline metrics::ScoreReport score(const std::vector<Generation>& gens, const std::vector<Example>& split,
                                  const std::set<std::string>& which = metrics::known_metrics()) {
  std::vector<metrics::Tokens> preds, refs;
  std::vector<std::set<std::string>> names;
  for (const auto& g : gens) {
    preds.push_back(g.tokens);
    refs.push_back(split.at(g.example).sample.caption);
    names.push_back(split.at(g.example).names);
  }
  return metrics::evaluate(preds, refs, names, which);
}

struct AblationResult {
  Variant variant = Variant::full;
  TrainResult training;
  std::vector<Generation> generations;
  metrics::ScoreReport report;
};

// Trains one variant from scratch under `cfg` and scores it on the test split.
inline AblationResult run_ablation(ExperimentConfig cfg, const Dataset& ds, Variant variant,
                                   std::ostream* log = nullptr, std::size_t threads = 1) {
  cfg.variant = variant;
  Model model = make_model(cfg, ds);
  AblationResult r;
  r.variant = variant;
  r.training = train(model, ds, cfg, log);
  r.generations = generate_split(model, ds.test, variant, cfg.decode_config(decoding::exempt_ids(*ds.vocab)), threads);
  r.report = score(r.generations, ds.test);
  return r;
}

// A trained run on disk: the checkpoint itself plus <checkpoint>.json (the
// configuration) and <checkpoint>.vocab.tsv (the global vocabulary).
struct SavedRun {
  ExperimentConfig config;
  ParamStore<float> params;
  corpus::Vocabulary vocab;
};

inline std::filesystem::path sidecar(const std::filesystem::path& ckpt, const char* suffix) {
  return ckpt.string() + suffix;
}

inline void save_run(const std::filesystem::path& ckpt, const Model& model, const ExperimentConfig& cfg,
                     const corpus::Vocabulary& vocab) {
  if (ckpt.has_parent_path()) std::filesystem::create_directories(ckpt.parent_path());
  save_checkpoint(model.params(), ckpt.string());
  auto j = to_json(cfg);
  j["train"]["load_checkpoint"] = "";
  std::ofstream(sidecar(ckpt, ".json")) << j.dump(2) << "\n";
  vocab.save(sidecar(ckpt, ".vocab.tsv").string());
}

inline SavedRun load_run(const std::filesystem::path& ckpt) {
  return {load_config(sidecar(ckpt, ".json")), load_checkpoint<float>(ckpt.string()),
          corpus::Vocabulary::load(sidecar(ckpt, ".vocab.tsv").string())};
}

inline Model model_from_run(const SavedRun& run) {
  ModelConfig mc = run.config.model;
  mc.vocab_size = run.vocab.size();
  return Model(mc, run.params);
}

}  // namespace ctxcap::harness

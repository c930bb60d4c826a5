#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "ctxcap/corpus/build.hpp"
#include "ctxcap/corpus/script.hpp"
#include "ctxcap/grad_suite.hpp"
#include "ctxcap/harness/config.hpp"
#include "ctxcap/harness/dataset.hpp"
#include "ctxcap/harness/synthetic.hpp"
#include "ctxcap/harness/train.hpp"
#include "ctxcap/metrics/report.hpp"

using namespace ctxcap;
using namespace ctxcap::harness;
namespace fs = std::filesystem;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

std::set<std::string> parse_metric_list(const std::string& s) {
  std::set<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');)
    if (!item.empty()) out.insert(item);
  return out;
}

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string checkpoint;
};

ExperimentConfig resolve_config(const Common& c, const std::string& preset_name) {
  ExperimentConfig cfg = c.config.empty() ? preset(preset_name) : load_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  return cfg;
}

int cmd_synthesize(const fs::path& out, SyntheticTaskSpec spec) {
  const auto d = generate_synthetic(spec);
  const auto manifest = write_synthetic(d, out);
  std::cout << "wrote " << d.records.size() << " records to " << manifest.string() << "\n";
  return kOk;
}

int cmd_train(const Common& c, const std::string& preset_name, const fs::path& manifest_path,
              const std::optional<std::string>& variant, const std::string& curve_out) {
  if (c.checkpoint.empty()) throw CLI::ValidationError("--checkpoint", "train needs an output checkpoint path");
  ExperimentConfig cfg = resolve_config(c, preset_name);
  if (variant) cfg.variant = parse_variant(*variant);
  const auto manifest = corpus::load_manifest(manifest_path);
  const Dataset ds = load_dataset(manifest, cfg);
  Model model = make_model(cfg, ds);
  const TrainResult res = train(model, ds, cfg, &std::cerr);
  if (!res.frozen_unchanged) throw std::logic_error("a frozen parameter changed during its stage");
  save_run(c.checkpoint, model, cfg, *ds.vocab);
  if (!curve_out.empty()) {
    std::ofstream out(curve_out);
    for (const auto& e : res.curve)
      out << nlohmann::json{{"stage", e.stage}, {"epoch", e.epoch}, {"train_loss", e.train_loss},
                            {"val_loss", e.val_loss}}
                 .dump()
          << "\n";
  }
  std::cout << "saved " << c.checkpoint << " after " << res.batch_losses.size() << " steps\n";
  return kOk;
}

int cmd_generate(const Common& c, const fs::path& manifest_path, const std::string& split, const std::string& out_path,
                 std::optional<std::size_t> beam, std::optional<double> beta, std::size_t threads) {
  if (c.checkpoint.empty()) throw CLI::ValidationError("--checkpoint", "generate needs a trained checkpoint");
  SavedRun run = load_run(c.checkpoint);
  if (!c.config.empty()) {
    // only decoding settings may differ from training
    const auto over = load_config(c.config);
    run.config.beam_width = over.beam_width;
    run.config.repetition_beta = over.repetition_beta;
  }
  if (beam) run.config.beam_width = *beam;
  if (beta) run.config.repetition_beta = *beta;
  run.config.validate();
  const auto manifest = corpus::load_manifest(manifest_path);
  auto vocab = std::make_shared<corpus::Vocabulary>(run.vocab);
  const Dataset ds = make_dataset(
      vocab, manifest.records, [&](std::size_t i) { return corpus::read_features(manifest.feature_path(manifest.records[i])); },
      run.config.model.max_context_len);
  Model model = model_from_run(run);
  const auto gens = generate_split(model, ds.split(split), run.config.variant,
                                   run.config.decode_config(decoding::exempt_ids(*vocab)), threads);
  std::ofstream file;
  std::ostream* out = &std::cout;
  if (!out_path.empty() && out_path != "-") {
    file.open(out_path);
    if (!file) throw std::runtime_error("cannot write '" + out_path + "'");
    out = &file;
  }
  for (const auto& g : gens)
    *out << nlohmann::json{{"clip_id", g.clip_id}, {"caption", corpus::join(g.tokens)}, {"log_prob", g.score}}.dump()
         << "\n";
  return kOk;
}

int cmd_evaluate(const fs::path& pred_path, const fs::path& manifest_path, const std::string& metrics_arg,
                 const std::string& out_path) {
  const auto manifest = corpus::load_manifest(manifest_path);
  std::map<std::string, const corpus::ManifestRecord*> by_clip;
  for (const auto& r : manifest.records) by_clip.try_emplace(r.clip_id, &r);
  std::vector<metrics::Tokens> preds, refs;
  std::vector<std::set<std::string>> names;
  std::istringstream lines(corpus::read_text_file(pred_path));
  std::size_t lineno = 0;
  for (std::string line; std::getline(lines, line);) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw corpus::DataError(pred_path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    const auto id = j.at("clip_id").get<std::string>();
    const auto it = by_clip.find(id);
    if (it == by_clip.end())
      throw corpus::DataError(pred_path.string() + ":" + std::to_string(lineno) + ": clip '" + id +
                              "' is not in the manifest");
    preds.push_back(corpus::tokenize(j.at("caption").get<std::string>()));
    refs.push_back(corpus::tokenize(it->second->caption));
    names.emplace_back(it->second->names.begin(), it->second->names.end());
  }
  if (preds.empty()) throw corpus::DataError("no predictions in '" + pred_path.string() + "'");
  const auto report = metrics::evaluate(preds, refs, names, parse_metric_list(metrics_arg));
  const std::string text = report.to_json().dump(2);
  if (out_path.empty() || out_path == "-") std::cout << text << "\n";
  else std::ofstream(out_path) << text << "\n";
  return kOk;
}

int cmd_build(corpus::BuildOptions opt, const std::string& mode) {
  opt.mode = corpus::parse_corpus_mode(mode);
  corpus::BuildReport rep;
  const auto records = corpus::build_corpus(opt, &rep);
  nlohmann::json movies = nlohmann::json::array();
  for (const auto& m : rep.movies)
    movies.push_back({{"movie_id", m.movie_id}, {"mean_overlap", m.mean_overlap}, {"kept", m.kept}});
  std::cout << nlohmann::json{{"movies", movies},
                              {"alignment_score", rep.alignment_score},
                              {"captions_in", rep.captions_in},
                              {"dropped_unaligned", rep.dropped_unaligned},
                              {"truncated_contexts", rep.truncated_contexts},
                              {"records_out", records.size()}}
                   .dump(2)
            << "\n";
  return kOk;
}

int cmd_grad_check(std::uint64_t seed, std::size_t max_dim) {
  bool ok = true;
  for (const auto& e : run_grad_suite(seed, max_dim)) {
    const bool pass = e.result.max_relative_error < 1e-4;
    ok &= pass;
    std::cout << (pass ? "ok   " : "FAIL ") << e.name << " max_rel_err=" << e.result.max_relative_error
              << " coords=" << e.result.coords_checked;
    if (!pass) std::cout << " worst=" << e.result.worst_param << "[" << e.result.worst_index << "]";
    std::cout << "\n";
  }
  return ok ? kOk : kNumeric;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Video captioning with contextual text: corpus building, training, decoding and scoring."};
  app.require_subcommand(1);
  Common common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config, "JSON experiment config (starts from its preset)");
    sub->add_option("--seed", common.seed, "override the config seed");
    sub->add_option("--checkpoint", common.checkpoint, "checkpoint path");
  };

  std::string manifest, preset_name = "synthetic", split = "test", out, curve, metrics_arg = "rouge,cider,meteor,names,rep";
  std::optional<std::string> variant;
  std::optional<std::size_t> beam;
  std::optional<double> beta;
  std::size_t threads = std::max(1u, std::thread::hardware_concurrency());

  auto* train_cmd = app.add_subcommand("train", "train a model through the configured stages");
  add_common(train_cmd);
  train_cmd->add_option("--manifest", manifest, "dataset manifest (JSONL)")->required();
  train_cmd->add_option("--preset", preset_name, "preset used when no --config is given");
  train_cmd->add_option("--variant", variant, "full|video_only|context_only");
  train_cmd->add_option("--curve", curve, "write the per-epoch loss curve (JSONL)");

  auto* gen_cmd = app.add_subcommand("generate", "decode captions for a split");
  add_common(gen_cmd);
  gen_cmd->add_option("--manifest", manifest, "dataset manifest (JSONL)")->required();
  gen_cmd->add_option("--split", split, "train|val|test")->check(CLI::IsMember({"train", "val", "test"}));
  gen_cmd->add_option("--out", out, "predictions file (JSONL), default stdout");
  gen_cmd->add_option("--beam", beam, "beam width");
  gen_cmd->add_option("--beta", beta, "repetition penalty in [0,1]; 1 disables it");
  gen_cmd->add_option("--threads", threads, "decoding threads");

  std::string pred;
  auto* eval_cmd = app.add_subcommand("evaluate", "score predictions against manifest captions");
  eval_cmd->add_option("--pred", pred, "predictions (JSONL with clip_id, caption)")->required();
  eval_cmd->add_option("--manifest", manifest, "dataset manifest (JSONL)")->required();
  eval_cmd->add_option("--metrics", metrics_arg, "comma-separated subset of rouge,cider,meteor,names,rep");
  eval_cmd->add_option("--out", out, "report file, default stdout");

  corpus::BuildOptions bopt;
  std::string mode = "ad", scripts, subs, captions;
  std::optional<std::size_t> max_context;
  auto* build_cmd = app.add_subcommand("build-corpus", "align scripts or articles to clips and write a manifest");
  build_cmd->add_option("--mode", mode, "ad|script|news");
  build_cmd->add_option("--scripts", scripts, "directory of <movie>.txt screenplays or articles");
  build_cmd->add_option("--subs", subs, "directory of <movie>.srt subtitles");
  build_cmd->add_option("--captions", captions, "caption records (JSONL)")->required();
  build_cmd->add_option("--out", out, "output manifest")->required();
  build_cmd->add_option("--threshold", bopt.overlap_threshold, "keep movies whose mean overlap is below this");
  build_cmd->add_option("--max-context", max_context, "context token budget");
  build_cmd->add_option("--seed", bopt.split_seed, "seed of the movie-level split");

  std::uint64_t gc_seed = 1;
  std::size_t gc_dim = 8;
  auto* gc_cmd = app.add_subcommand("grad-check", "finite-difference check of every op and the full loss");
  gc_cmd->add_option("--seed", gc_seed, "shape and value seed");
  gc_cmd->add_option("--max-dim", gc_dim, "largest tensor side")->check(CLI::Range(2, 16));

  SyntheticTaskSpec spec;
  std::string syn_out;
  auto* syn_cmd = app.add_subcommand("synthesize", "write the synthetic copy task");
  syn_cmd->add_option("--out", syn_out, "output directory")->required();
  syn_cmd->add_option("--seed", spec.seed, "generator seed");
  syn_cmd->add_option("--train", spec.train, "training clips");
  syn_cmd->add_option("--val", spec.val, "validation clips");
  syn_cmd->add_option("--test", spec.test, "test clips");
  syn_cmd->add_option("--noise", spec.noise_sentences, "distractor sentences per context");
  syn_cmd->add_option("--list-length", spec.list_length, "names per caption for the long-output task (0: captions)");
  syn_cmd->add_option("--contexts", spec.contexts_per_clip, "context documents per clip");
  syn_cmd->add_option("--vocab", spec.global_vocab, "global vocabulary bound");
  syn_cmd->add_option("--names", spec.name_pool, "out-of-vocabulary name pool");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*train_cmd) return cmd_train(common, preset_name, manifest, variant, curve);
    if (*gen_cmd) return cmd_generate(common, manifest, split, out, beam, beta, threads);
    if (*eval_cmd) return cmd_evaluate(pred, manifest, metrics_arg, out);
    if (*build_cmd) {
      bopt.scripts_dir = scripts;
      bopt.subs_dir = subs;
      bopt.captions = captions;
      bopt.out_manifest = out;
      bopt.max_context = max_context;
      return cmd_build(bopt, mode);
    }
    if (*gc_cmd) return cmd_grad_check(gc_seed, gc_dim);
    if (*syn_cmd) return cmd_synthesize(syn_out, spec);
  } catch (const CLI::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kNumeric;
  } catch (const corpus::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const corpus::ParseError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const FormatError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const DimensionError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  }
  return kUsage;
}

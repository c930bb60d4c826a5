#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "ctxcap/harness/config.hpp"
#include "ctxcap/harness/dataset.hpp"
#include "ctxcap/harness/synthetic.hpp"
#include "ctxcap/harness/train.hpp"

using namespace ctxcap;
using namespace ctxcap::harness;

namespace {

std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("ctxcap_harness_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

SyntheticTaskSpec small_spec(std::size_t train = 24, std::size_t val = 4, std::size_t test = 4) {
  SyntheticTaskSpec s;
  s.train = train;
  s.val = val;
  s.test = test;
  return s;
}

ExperimentConfig tiny_config() {
  ExperimentConfig c = preset("synthetic");
  c.model.s2vt.hidden_dim = 8;
  c.model.s2vt.attention_dim = 8;
  c.model.s2vt.video_embed_dim = 8;
  c.model.s2vt.word_embed_dim = 8;
  c.model.context_hidden = 8;
  c.model.context_attention_dim = 8;
  c.model.vocab_hidden = 8;
  c.batch_size = 4;
  c.stages = {{Stage::pretrain_s2vt, 1}, {Stage::frozen_top, 1}, {Stage::end_to_end, 2}};
  return c;
}

std::map<std::string, std::uint64_t> checksums(const ParamStore<float>& p) {
  std::map<std::string, std::uint64_t> out;
  for (const auto& [name, t] : p) out[name] = checksum(t);
  return out;
}

}  // namespace

TEST(Synthetic, SameSeedGivesByteIdenticalOutput) {
  const auto a = generate_synthetic(small_spec());
  const auto b = generate_synthetic(small_spec());
  EXPECT_EQ(corpus::serialize_manifest(a.records), corpus::serialize_manifest(b.records));
  const auto da = scratch("det_a"), db = scratch("det_b");
  write_synthetic(a, da);
  write_synthetic(b, db);
  EXPECT_EQ(slurp(da / "manifest.jsonl"), slurp(db / "manifest.jsonl"));
  EXPECT_EQ(slurp(da / "vocab.tsv"), slurp(db / "vocab.tsv"));
  EXPECT_EQ(slurp(da / "features/syn3.bin"), slurp(db / "features/syn3.bin"));

  auto other = small_spec();
  other.seed = 2;
  EXPECT_NE(corpus::serialize_manifest(generate_synthetic(other).records), corpus::serialize_manifest(a.records));
}

TEST(Synthetic, NoNoiseMeansContextIsCarrier) {
  auto spec = small_spec();
  spec.noise_sentences = 0;
  for (const auto& r : generate_synthetic(spec).records) {
    const auto ctx = corpus::tokenize(r.context);
    ASSERT_EQ(ctx.size(), 8u);
    EXPECT_EQ(ctx[0], r.names[0]);
    EXPECT_EQ(ctx[1], "met");
    EXPECT_EQ(ctx[2], r.names[1]);
    EXPECT_EQ(ctx[6], "today");
  }
}

TEST(Synthetic, FillersNeverInGlobalVocabulary) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto spec = small_spec(50, 0, 0);
    spec.seed = seed;
    const auto d = generate_synthetic(spec);
    const auto vocab = synthetic_vocabulary(d);
    EXPECT_LE(vocab.size(), spec.global_vocab);
    for (const auto& n : d.names) EXPECT_FALSE(vocab.find(n)) << n;
    for (const auto& l : d.locations) EXPECT_FALSE(vocab.find(l)) << l;
    // every caption word outside the vocabulary is one of the sample's fillers, found in its context
    for (const auto& r : d.records) {
      const auto ctx = corpus::tokenize(r.context);
      for (const auto& w : corpus::tokenize(r.caption)) {
        if (vocab.find(w)) continue;
        EXPECT_NE(std::find(ctx.begin(), ctx.end(), w), ctx.end()) << w;
      }
    }
  }
}

TEST(Synthetic, FeaturesEncodeTemplate) {
  const auto d = generate_synthetic(small_spec(40, 0, 0));
  const auto& acts = harness::detail::actions();
  for (std::size_t i = 0; i < d.records.size(); ++i) {
    const auto cap = corpus::tokenize(d.records[i].caption);
    std::size_t tmpl = acts.size();
    for (std::size_t k = 0; k < acts.size(); ++k)
      if (cap[3] == acts[k].first && cap[4] == acts[k].second) tmpl = k;
    ASSERT_LT(tmpl, acts.size());
    const auto& f = d.features[i];
    for (std::size_t t = 0; t < f.shape()[0]; ++t) {
      std::size_t arg = 0;
      for (std::size_t c = 1; c < f.shape()[1]; ++c)
        if (f.values()[t * f.shape()[1] + c] > f.values()[t * f.shape()[1] + arg]) arg = c;
      EXPECT_EQ(arg, tmpl);
    }
  }
}

TEST(Synthetic, VocabularyTooSmallIsAnError) {
  auto spec = small_spec();
  spec.global_vocab = 20;
  EXPECT_THROW(generate_synthetic(spec), std::invalid_argument);
  spec.global_vocab = 50;
  EXPECT_NO_THROW(generate_synthetic(spec));
}

TEST(Synthetic, ListTask) {
  auto spec = small_spec(10, 0, 0);
  spec.list_length = 5;
  for (const auto& r : generate_synthetic(spec).records) {
    EXPECT_EQ(r.names.size(), 5u);
    EXPECT_EQ(corpus::tokenize(r.caption).size(), 10u);
    EXPECT_NE(r.context.find(r.caption.substr(0, r.caption.size() - 2)), std::string::npos);
  }
}

TEST(Synthetic, SeveralContextsPerClip) {
  auto spec = small_spec(6, 0, 0);
  spec.contexts_per_clip = 3;
  const auto d = generate_synthetic(spec);
  ASSERT_EQ(d.records.size(), 18u);
  for (std::size_t c = 0; c < 6; ++c) {
    for (std::size_t k = 0; k < 3; ++k) {
      const auto& r = d.records[3 * c + k];
      EXPECT_EQ(r.clip_id, d.records[3 * c].clip_id);
      EXPECT_EQ(r.caption, d.records[3 * c].caption);
      EXPECT_EQ(d.features[3 * c + k].values()[0], d.features[3 * c].values()[0]);
      EXPECT_NE(r.context.find(r.names[0] + " met " + r.names[1]), std::string::npos);
    }
  }
}

TEST(Dataset, LoadedFromDiskMatchesInMemory) {
  const auto d = generate_synthetic(small_spec());
  const auto dir = scratch("load");
  const auto manifest = write_synthetic(d, dir);
  const auto cfg = preset("synthetic");
  const Dataset a = dataset_from_synthetic(d, cfg.model.max_context_len);
  const Dataset b = load_dataset(corpus::load_manifest(manifest), cfg);
  EXPECT_EQ(*a.vocab, *b.vocab);
  ASSERT_EQ(a.train.size(), b.train.size());
  ASSERT_EQ(a.test.size(), b.test.size());
  for (std::size_t i = 0; i < a.train.size(); ++i) {
    EXPECT_EQ(a.train[i].sample.caption, b.train[i].sample.caption);
    EXPECT_EQ(a.train[i].sample.context_input, b.train[i].sample.context_input);
    EXPECT_EQ(a.train[i].names, b.train[i].names);
    EXPECT_EQ(a.train[i].sample.features.values()[5], b.train[i].sample.features.values()[5]);
  }
}

TEST(Dataset, ContextIsTruncated) {
  const auto d = generate_synthetic(small_spec());
  const Dataset ds = dataset_from_synthetic(d, 5);
  for (const auto& ex : ds.train) EXPECT_LE(ex.sample.context_input.size(), 5u);
}

TEST(Config, PresetsMatchTheUnrolledTimelines) {
  auto news = preset("news");
  EXPECT_EQ(news.model.s2vt.enc_steps, 60u);
  EXPECT_EQ(news.model.s2vt.dec_steps, 60u);
  EXPECT_EQ(news.model.max_context_len, 400u);
  auto ad = preset("lsmdc-ad");
  EXPECT_EQ(ad.model.s2vt.enc_steps, 10u);
  EXPECT_EQ(ad.model.s2vt.dec_steps, 30u);
  EXPECT_EQ(ad.model.max_context_len, 400u);
  EXPECT_EQ(preset("lsmdc-script").model.max_context_len, 600u);
  EXPECT_DOUBLE_EQ(ad.model.dropout, 0.5);
  EXPECT_DOUBLE_EQ(ad.learning_rate, 1e-4);
  EXPECT_EQ(ad.batch_size, 16u);
  EXPECT_EQ(ad.patience, 5u);
  EXPECT_THROW(preset("imagenet"), std::invalid_argument);
}

TEST(Config, JsonRoundTrip) {
  ExperimentConfig c = preset("synthetic");
  c.beam_width = 3;
  c.repetition_beta = 0.5;
  c.model.coverage_lambda = 0.25;
  c.variant = Variant::context_only;
  c.seed = 42;
  c.freeze_top_lstm = true;
  c.stages = {{Stage::end_to_end, 7}};
  const auto back = config_from_json(to_json(c));
  EXPECT_EQ(to_json(back), to_json(c));
  EXPECT_EQ(back.variant, Variant::context_only);
  EXPECT_EQ(back.stages.size(), 1u);
  EXPECT_EQ(back.stages[0].max_epochs, 7u);
}

TEST(Config, OverridesAndRejections) {
  auto c = config_from_json(nlohmann::json::parse(R"({"preset":"news","decode":{"beam_width":4}})"));
  EXPECT_EQ(c.beam_width, 4u);
  EXPECT_EQ(c.model.s2vt.dec_steps, 60u);
  EXPECT_THROW(config_from_json(nlohmann::json::parse(R"({"model":{"hiden_dim":3}})")), std::invalid_argument);
  EXPECT_THROW(config_from_json(nlohmann::json::parse(R"({"decode":{"repetition_beta":2}})")),
               std::invalid_argument);
  EXPECT_THROW(config_from_json(nlohmann::json::parse(R"({"train":{"stages":[{"stage":"warmup"}]}})")),
               std::invalid_argument);
  EXPECT_THROW(config_from_json(nlohmann::json::parse(R"({"train":{"variant":"audio"}})")), std::invalid_argument);
}

TEST(Train, FrozenSetsPerStage) {
  const auto cfg = tiny_config();
  ModelConfig mc = cfg.model;
  mc.vocab_size = 40;
  Model m(mc, 1);
  const auto pre = frozen_for(m.params(), Stage::pretrain_s2vt, cfg);
  const auto top = frozen_for(m.params(), Stage::frozen_top, cfg);
  const auto e2e = frozen_for(m.params(), Stage::end_to_end, cfg);
  EXPECT_TRUE(pre.count("pgen.b"));
  EXPECT_TRUE(pre.count("context_lstm.fwd.W"));
  EXPECT_FALSE(pre.count("top_lstm.fwd.W"));
  EXPECT_TRUE(top.count("top_lstm.fwd.W"));
  EXPECT_TRUE(top.count("top_lstm.bwd.b"));
  EXPECT_FALSE(top.count("bottom_lstm.W"));
  EXPECT_FALSE(top.count("pgen.b"));
  EXPECT_TRUE(e2e.empty());

  auto vo = cfg;
  vo.variant = Variant::video_only;
  EXPECT_TRUE(frozen_for(m.params(), Stage::end_to_end, vo).count("pointer_att.u"));
  auto ft = cfg;
  ft.freeze_top_lstm = true;
  EXPECT_TRUE(frozen_for(m.params(), Stage::end_to_end, ft).count("top_lstm.fwd.b"));
}

TEST(Train, OverfitsOneSample) {
  auto spec = small_spec(1, 0, 0);
  const Dataset ds = dataset_from_synthetic(generate_synthetic(spec), 40);
  ExperimentConfig cfg = preset("synthetic");
  cfg.model.coverage_lambda = 0.0;
  cfg.batch_size = 1;
  cfg.patience = 1000;
  cfg.stages = {{Stage::end_to_end, 200}};
  Model m = make_model(cfg, ds);
  const auto res = train(m, ds, cfg);
  ASSERT_EQ(res.batch_losses.size(), 200u);
  EXPECT_GT(res.batch_losses.front(), 1.0);
  EXPECT_LT(res.batch_losses.back(), 0.1);
}

TEST(Train, FrozenTopLeavesTopLstmUntouched) {
  const Dataset ds = dataset_from_synthetic(generate_synthetic(small_spec()), 40);
  auto cfg = tiny_config();
  cfg.stages = {{Stage::frozen_top, 2}};
  Model m = make_model(cfg, ds);
  const auto before = checksums(m.params());
  const auto res = train(m, ds, cfg);
  EXPECT_TRUE(res.frozen_unchanged);
  const auto after = checksums(m.params());
  std::size_t changed = 0;
  for (const auto& [name, sum] : before) {
    if (is_top_lstm(name)) EXPECT_EQ(after.at(name), sum) << name;
    else changed += after.at(name) != sum;
  }
  EXPECT_GT(changed, 0u);
}

TEST(Train, PretrainLeavesPointerBranchUntouched) {
  const Dataset ds = dataset_from_synthetic(generate_synthetic(small_spec()), 40);
  auto cfg = tiny_config();
  cfg.stages = {{Stage::pretrain_s2vt, 2}};
  Model m = make_model(cfg, ds);
  const auto before = checksums(m.params());
  train(m, ds, cfg);
  const auto after = checksums(m.params());
  for (const auto& [name, sum] : before)
    if (is_pointer_only(name)) EXPECT_EQ(after.at(name), sum) << name;
  EXPECT_NE(after.at("bottom_lstm.W"), before.at("bottom_lstm.W"));
}

TEST(Train, IdenticalSeedsGiveIdenticalCurves) {
  const Dataset ds = dataset_from_synthetic(generate_synthetic(small_spec()), 40);
  const auto cfg = tiny_config();
  Model a = make_model(cfg, ds), b = make_model(cfg, ds);
  const auto ra = train(a, ds, cfg), rb = train(b, ds, cfg);
  EXPECT_EQ(ra.batch_losses, rb.batch_losses);
  ASSERT_EQ(ra.curve.size(), rb.curve.size());
  for (std::size_t i = 0; i < ra.curve.size(); ++i) EXPECT_EQ(ra.curve[i].val_loss, rb.curve[i].val_loss);
  EXPECT_EQ(checksums(a.params()), checksums(b.params()));

  auto other = cfg;
  other.seed = 2;
  Model c = make_model(other, ds);
  EXPECT_NE(train(c, ds, other).batch_losses, ra.batch_losses);
}

TEST(Train, ResumingFromCheckpointMatchesOneRun) {
  const Dataset ds = dataset_from_synthetic(generate_synthetic(small_spec()), 40);
  auto cfg = tiny_config();
  Model whole = make_model(cfg, ds);
  train(whole, ds, cfg);

  auto first = cfg;
  first.stages = {cfg.stages[0]};
  Model part = make_model(first, ds);
  train(part, ds, first);
  const auto ckpt = scratch("resume") / "stage1.ckpt";
  save_checkpoint(part.params(), ckpt.string());

  auto rest = cfg;
  rest.stages = {cfg.stages[1], cfg.stages[2]};
  rest.load_checkpoint = ckpt.string();
  Model resumed = make_model(rest, ds);
  train(resumed, ds, rest);
  EXPECT_EQ(checksums(resumed.params()), checksums(whole.params()));
}

TEST(Train, NonFiniteLossAbortsWithDiagnostic) {
  auto d = generate_synthetic(small_spec(8, 0, 0));
  for (auto& v : d.features[5].values()) v = std::numeric_limits<float>::quiet_NaN();
  const Dataset ds = dataset_from_synthetic(d, 40);
  auto cfg = tiny_config();
  cfg.stages = {{Stage::end_to_end, 1}};
  Model m = make_model(cfg, ds);
  try {
    train(m, ds, cfg);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("syn5"), std::string::npos) << msg;
    EXPECT_NE(msg.find("last finite"), std::string::npos) << msg;
  }
}

TEST(Generate, ThreadCountDoesNotChangeOutput) {
  const Dataset ds = dataset_from_synthetic(generate_synthetic(small_spec(4, 0, 12)), 40);
  auto cfg = tiny_config();
  cfg.beam_width = 2;
  Model m = make_model(cfg, ds);
  const auto dc = cfg.decode_config(decoding::exempt_ids(*ds.vocab));
  const auto one = generate_split(m, ds.test, Variant::full, dc, 1);
  const auto four = generate_split(m, ds.test, Variant::full, dc, 4);
  ASSERT_EQ(one.size(), 12u);
  for (std::size_t i = 0; i < one.size(); ++i) {
    EXPECT_EQ(one[i].tokens, four[i].tokens);
    EXPECT_EQ(one[i].score, four[i].score);
  }
}

TEST(Generate, OneCaptionPerClipPicksMostProbableDocument) {
  auto spec = small_spec(0, 0, 5);
  spec.contexts_per_clip = 3;
  const Dataset ds = dataset_from_synthetic(generate_synthetic(spec), 40);
  auto cfg = tiny_config();
  Model m = make_model(cfg, ds);
  const auto dc = cfg.decode_config(decoding::exempt_ids(*ds.vocab));
  const auto gens = generate_split(m, ds.test, Variant::full, dc);
  ASSERT_EQ(gens.size(), 5u);
  for (const auto& g : gens) {
    EXPECT_EQ(ds.test[g.example].clip_id, g.clip_id);
    for (std::size_t i = 0; i < ds.test.size(); ++i) {
      if (ds.test[i].clip_id != g.clip_id) continue;
      const auto r = decode_example(m, ds.test[i], Variant::full, dc);
      EXPECT_LE(r.score, g.score + 1e-12);
    }
  }
}

TEST(Generate, VideoOnlyNeverRecoversNames) {
  const Dataset ds = dataset_from_synthetic(generate_synthetic(small_spec(4, 0, 20)), 40);
  auto cfg = tiny_config();
  Model m = make_model(cfg, ds);
  const auto dc = cfg.decode_config(decoding::exempt_ids(*ds.vocab));
  const auto gens = generate_split(m, ds.test, Variant::video_only, dc);
  for (const auto& g : gens)
    for (const auto& w : g.tokens) EXPECT_TRUE(ds.vocab->find(w)) << w;
  const auto rep = score(gens, ds.test, {"names"});
  EXPECT_DOUBLE_EQ(rep.corpus.at("names"), 0.0);
}

TEST(Run, SaveAndLoadRestoresModelConfigAndVocabulary) {
  const Dataset ds = dataset_from_synthetic(generate_synthetic(small_spec()), 40);
  auto cfg = tiny_config();
  cfg.beam_width = 2;
  Model m = make_model(cfg, ds);
  const auto ckpt = scratch("run") / "model.ckpt";
  save_run(ckpt, m, cfg, *ds.vocab);
  const SavedRun run = load_run(ckpt);
  EXPECT_EQ(to_json(run.config), to_json(cfg));
  EXPECT_EQ(run.vocab, *ds.vocab);
  Model back = model_from_run(run);
  EXPECT_EQ(checksums(back.params()), checksums(m.params()));
}

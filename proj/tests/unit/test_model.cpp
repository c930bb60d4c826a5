#include <gtest/gtest.h>

#include "ctxcap/decoding.hpp"
#include "ctxcap/model.hpp"
#include "test_helpers.hpp"

using namespace ctxcap;
namespace th = ctxcap::testing;

namespace {

ModelConfig tiny(std::size_t vocab_size) {
  ModelConfig c;
  c.s2vt.enc_steps = 3;
  c.s2vt.dec_steps = 5;
  c.s2vt.video_feature_dim = 4;
  c.s2vt.video_embed_dim = 3;
  c.s2vt.word_embed_dim = 3;
  c.s2vt.hidden_dim = 4;
  c.s2vt.attention_dim = 3;
  c.context_hidden = 2;
  c.context_attention_dim = 3;
  c.vocab_hidden = 4;
  c.max_context_len = 8;
  c.vocab_size = vocab_size;
  c.dropout = 0.0;
  c.coverage_lambda = 1.0;
  return c;
}

Tensor<float> features(std::size_t n, std::size_t f, std::uint64_t seed) {
  Rng rng(seed);
  Tensor<float> t({n, f});
  for (auto& v : t.values()) v = static_cast<float>(rng.uniform(-1, 1));
  return t;
}

class ModelTest : public ::testing::TestWithParam<Variant> {
 protected:
  corpus::Vocabulary vocab = corpus::Vocabulary::from_words({"the", "walks", "into", "kitchen", "."});
};

}  // namespace

TEST_P(ModelTest, LossGradientMatchesFiniteDifferences) {
  CaptionModel<double> model(tiny(vocab.size()), 5);
  {
    Rng rng(5);
    for (auto& [name, t] : model.params())
      for (auto& v : t.values()) v = rng.uniform(-0.5, 0.5);
  }
  PreparedSample sample(features(4, 4, 1), vocab, {"maggie", "walks", "into", "the", "kitchen"},
                        {"maggie", "walks", "into", "the", "kitchen"});
  auto loss = [&](Tape<double>& tape) {
    Rng rng(1);
    return model.loss(tape, sample, GetParam(), false, rng).loss;
  };
  GradCheckOptions opt;
  opt.max_coords_per_param = 12;
  auto res = grad_check(loss, model.params(), opt);
  EXPECT_LT(res.max_relative_error, 1e-4) << res.worst_param << "[" << res.worst_index << "] " << res.analytic << " vs " << res.numeric;
}

TEST_P(ModelTest, StepperDistributionsAreNormalized) {
  CaptionModel<double> model(tiny(vocab.size()), 9);
  PreparedSample sample(features(2, 4, 2), vocab, {"maggie", "walks", "maggie", "."}, {});
  ModelStepper<double> stepper(model, sample, GetParam());
  const std::size_t expect = GetParam() == Variant::video_only ? vocab.size() : vocab.size() + 1;
  EXPECT_EQ(stepper.vocab_size(), expect);
  auto state = stepper.initial();
  std::size_t tok = corpus::kBos;
  for (int t = 0; t < 4; ++t) {
    auto out = stepper.step(state, tok);
    ASSERT_EQ(out.probs.size(), expect);
    double z = 0.0;
    for (double p : out.probs) z += p;
    EXPECT_NEAR(z, 1.0, 1e-12);
    if (GetParam() == Variant::video_only) {
      EXPECT_EQ(out.p_gen, 1.0);
      EXPECT_TRUE(out.xi.empty());
    } else {
      double cov = 0.0;
      for (double c : stepper.coverage_of(out.next)) cov += c;
      EXPECT_NEAR(cov, t + 1.0, 1e-12);
    }
    state = out.next;
    tok = vocab.size();  // feed the OOV id back; the stepper maps it to UNK
  }
}

TEST_P(ModelTest, BeamWidthOneEqualsGreedyOnRealModel) {
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    CaptionModel<double> model(tiny(vocab.size()), seed);
    PreparedSample sample(features(3, 4, seed), vocab, {"maggie", "walks", "into", "the", "kitchen"}, {});
    decoding::DecodeConfig cfg;
    cfg.max_len = 6;
    cfg.exempt = decoding::exempt_ids(vocab);
    ModelStepper<double> s1(model, sample, GetParam()), s2(model, sample, GetParam());
    auto g = decoding::greedy_decode(s1, cfg);
    auto b = decoding::beam_search(s2, cfg);
    EXPECT_EQ(g.tokens, b.tokens);
    cfg.repetition_beta = 0.0;
    ModelStepper<double> s3(model, sample, GetParam());
    auto nr = decoding::beam_search(s3, (cfg.beam_width = 2, cfg));
    std::set<std::size_t> seen;
    for (auto id : nr.tokens)
      if (!cfg.exempt.count(id)) EXPECT_TRUE(seen.insert(id).second);
  }
}

INSTANTIATE_TEST_SUITE_P(Variants, ModelTest,
                         ::testing::Values(Variant::full, Variant::video_only, Variant::context_only),
                         [](const auto& info) { return std::string(variant_name(info.param)); });

TEST(Model, TargetsMapUnseenWordsToUnkAndAppendEos) {
  auto vocab = corpus::Vocabulary::from_words({"the", "dog"});
  CaptionModel<float> model(tiny(vocab.size()), 1);
  PreparedSample s(features(1, 4, 1), vocab, {"rex", "the"}, {"rex", "the", "cat", "dog", "dog", "dog"});
  auto full = model.targets(s, Variant::full);
  EXPECT_EQ(full, (std::vector<std::size_t>{vocab.size(), *vocab.find("the"), corpus::kUnk, *vocab.find("dog"),
                                            corpus::kEos}));
  auto video = model.targets(s, Variant::video_only);
  EXPECT_EQ(video[0], corpus::kUnk);
  EXPECT_EQ(video.size(), 5u);  // dec_steps caps caption + EOS
}

TEST(Model, ContextOnlyIgnoresFrames) {
  auto vocab = corpus::Vocabulary::from_words({"the", "dog"});
  CaptionModel<double> model(tiny(vocab.size()), 3);
  PreparedSample a(features(3, 4, 1), vocab, {"rex", "the", "dog"}, {"rex"});
  PreparedSample b(features(3, 4, 2), vocab, {"rex", "the", "dog"}, {"rex"});
  Rng rng(1);
  Tape<double> t1, t2;
  EXPECT_EQ(model.loss(t1, a, Variant::context_only, false, rng).loss.item(),
            model.loss(t2, b, Variant::context_only, false, rng).loss.item());
  Tape<double> t3, t4;
  EXPECT_NE(model.loss(t3, a, Variant::full, false, rng).loss.item(),
            model.loss(t4, b, Variant::full, false, rng).loss.item());
}

TEST(Model, FrozenTopLayerGetsNoGradient) {
  auto vocab = corpus::Vocabulary::from_words({"the", "dog"});
  CaptionModel<double> model(tiny(vocab.size()), 3);
  PreparedSample s(features(3, 4, 1), vocab, {"rex", "the", "dog"}, {"rex", "the", "dog"});
  Rng rng(1);
  Tape<double> tape;
  auto l = model.loss(tape, s, Variant::full, false, rng, s2vt::top_lstm_param_names());
  tape.backward(l.loss);
  for (const auto& name : s2vt::top_lstm_param_names()) EXPECT_FALSE(model.params().at(name).has_grad()) << name;
  EXPECT_TRUE(model.params().at("bottom_lstm.W").has_grad());
}

TEST(Model, AdoptsMatchingParametersAndRejectsOthers) {
  auto cfg = tiny(9);
  CaptionModel<float> a(cfg, 4);
  CaptionModel<float> b(cfg, a.params());
  EXPECT_EQ(b.params().at("vocab.W"), a.params().at("vocab.W"));
  auto other = cfg;
  other.vocab_size = 10;
  EXPECT_THROW(CaptionModel<float>(other, a.params()), DimensionError);
}

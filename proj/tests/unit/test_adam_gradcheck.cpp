#include <gtest/gtest.h>

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <limits>

#include "ctxcap/adam.hpp"
#include "ctxcap/params.hpp"
#include "test_helpers.hpp"

using namespace ctxcap;

TEST(Adam, ZeroGradientLeavesParameterUnchanged) {
  ParamStore<double> p;
  p.insert("w", Tensor<double>::vec({0.25, -1.5}));
  p.at("w").grad();
  AdamState st;
  adam_step(p, st);
  EXPECT_EQ(p.at("w")[0], 0.25);
  EXPECT_EQ(p.at("w")[1], -1.5);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  // Step 1 with g = 1: m̂ = 1, v̂ = 1, so Δθ = lr / (1 + ε).
  ParamStore<double> p;
  p.insert("w", Tensor<double>::scalar(2.0));
  p.at("w").grad()[0] = 1.0;
  AdamState st;
  st.learning_rate = 1e-4;
  adam_step(p, st);
  EXPECT_NEAR(2.0 - p.at("w")[0], 1e-4 / (1.0 + 1e-8), 1e-15);
  EXPECT_EQ(p.at("w").grad()[0], 0.0);
  EXPECT_EQ(st.step, 1u);
}

TEST(Adam, IdenticalParametersGetIdenticalUpdates) {
  ParamStore<float> p;
  p.insert("a", Tensor<float>::scalar(0.5f));
  p.insert("b", Tensor<float>::scalar(0.5f));
  AdamState st;
  for (int i = 0; i < 5; ++i) {
    p.at("a").grad()[0] = 0.3f * static_cast<float>(i + 1);
    p.at("b").grad()[0] = 0.3f * static_cast<float>(i + 1);
    adam_step(p, st);
  }
  EXPECT_EQ(p.at("a")[0], p.at("b")[0]);
}

TEST(Adam, MissingGradientNamesParameter) {
  ParamStore<double> p;
  p.insert("encoder.W", Tensor<double>::scalar(1.0));
  AdamState st;
  try {
    adam_step(p, st);
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("encoder.W"), std::string::npos);
  }
}

TEST(Adam, FrozenParametersAreSkipped) {
  ParamStore<double> p;
  p.insert("frozen", Tensor<double>::scalar(1.0));
  p.insert("live", Tensor<double>::scalar(1.0));
  p.at("live").grad()[0] = 1.0;
  AdamState st;
  st.frozen = {"frozen"};
  adam_step(p, st);
  EXPECT_EQ(p.at("frozen")[0], 1.0);
  EXPECT_LT(p.at("live")[0], 1.0);
}

TEST(Adam, ClippingBoundsTheEffectiveGradient) {
  ParamStore<double> p;
  p.insert("w", Tensor<double>::vec({0.0, 0.0}));
  p.at("w").grad()[0] = 30.0;
  p.at("w").grad()[1] = 40.0;
  AdamState st;
  st.clip_norm = 5.0;
  adam_step(p, st);
  // First step: direction only; clipping keeps the ratio.
  EXPECT_NEAR(p.at("w")[0], -st.learning_rate, 1e-12);
  EXPECT_NEAR(p.at("w")[1], -st.learning_rate, 1e-12);
  EXPECT_NEAR(st.first_moment["w"][0] / st.first_moment["w"][1], 0.75, 1e-12);
}

TEST(ParamStore, SortedNamesAndDuplicates) {
  ParamStore<double> p(1);
  p.add_zeros("z", {1});
  p.add_zeros("a", {1});
  p.add_zeros("m", {1});
  std::vector<std::string> names;
  for (const auto& [n, _] : p) names.push_back(n);
  EXPECT_EQ(names, (std::vector<std::string>{"a", "m", "z"}));
  EXPECT_THROW(p.add_zeros("a", {2}), std::invalid_argument);
}

TEST(ParamStore, UniformInitWithinFanInBound) {
  ParamStore<double> p(42);
  auto& w = p.add_uniform("w", {8, 16}, 16);
  for (double v : w.values()) EXPECT_LE(std::abs(v), 0.25);
  ParamStore<double> q(42);
  EXPECT_EQ(q.add_uniform("w", {8, 16}, 16), w);
}

class CheckpointTest : public ::testing::Test {
 protected:
  std::string path = (std::filesystem::temp_directory_path() / "ctxcap_ckpt_test.bin").string();
  void TearDown() override { std::remove(path.c_str()); }
};

TEST_F(CheckpointTest, BitExactRoundTrip) {
  ParamStore<float> p(17);
  p.add_uniform("layer.W", {5, 7}, 7);
  p.add_uniform("layer.b", {5}, 1);
  p.insert("special", Tensor<float>::vec({-0.0f, std::numeric_limits<float>::denorm_min(), 1e30f}));
  save_checkpoint(p, path);
  auto q = load_checkpoint<float>(path);
  ASSERT_EQ(q.size(), p.size());
  EXPECT_EQ(q.rng_seed(), 17u);
  for (const auto& [name, t] : p) {
    const auto& u = q.at(name);
    ASSERT_EQ(u.shape(), t.shape());
    EXPECT_EQ(std::memcmp(u.values().data(), t.values().data(), t.size() * sizeof(float)), 0) << name;
  }
}

TEST_F(CheckpointTest, RejectsForeignFiles) {
  {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    std::fputs("not a checkpoint at all", f);
    std::fclose(f);
  }
  EXPECT_THROW(load_checkpoint<float>(path), FormatError);
}

TEST_F(CheckpointTest, LoadsIntoWiderPrecision) {
  ParamStore<float> p(1);
  p.insert("x", Tensor<float>::vec({0.1f, 0.2f}));
  save_checkpoint(p, path);
  auto q = load_checkpoint<double>(path);
  EXPECT_EQ(q.at("x")[0], static_cast<double>(0.1f));
}

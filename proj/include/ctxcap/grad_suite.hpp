#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "ctxcap/autodiff.hpp"
#include "ctxcap/corpus/vocab.hpp"
#include "ctxcap/grad_check.hpp"
#include "ctxcap/model.hpp"
#include "ctxcap/params.hpp"
#include "ctxcap/rng.hpp"

namespace ctxcap {

struct GradSuiteEntry {
  std::string name;
  GradCheckResult result;
};

namespace detail {

// Reduces any output to a scalar through fixed random weights so that every
// output coordinate gets a distinct upstream gradient.
inline Var<double> probe(Var<double> y, std::uint64_t seed) {
  Rng rng(seed);
  Tensor<double> w(y.shape());
  for (auto& v : w.values()) v = rng.uniform(-1.0, 1.0);
  return sum(mul(y, y.tape()->constant(std::move(w))));
}

}  // namespace detail

// Central-difference checks of every differentiable op on random shapes with
// sides in [1, max_dim], then of the whole caption loss (encode, decode,
// pointer, coverage loss) for each variant on a model with all dims <= max_dim.
inline std::vector<GradSuiteEntry> run_grad_suite(std::uint64_t seed = 1, std::size_t max_dim = 8) {
  std::vector<GradSuiteEntry> out;
  Rng rng(seed);
  auto dim = [&] { return 1 + rng.below(max_dim); };
  using Build = std::function<Var<double>(Tape<double>&, ParamStore<double>&)>;

  ParamStore<double> ps(seed);
  const std::size_t m = dim(), n = dim(), k = dim();
  ps.add_uniform("a", {m, n}, 1);
  ps.add_uniform("b", {m, n}, 1);
  ps.add_uniform("r", {n}, 1);
  ps.add_uniform("s", {1}, 1);
  ps.add_uniform("A", {m, k}, 1);
  ps.add_uniform("B", {k, n}, 1);
  ps.add_uniform("C", {n, k}, 1);
  ps.add_uniform("x", {k}, 1);
  ps.add_uniform("y", {m}, 1);
  auto P = [](Tape<double>& t, ParamStore<double>& p, const char* name) { return t.parameter(p.at(name)); };
  const std::vector<std::pair<std::string, Build>> ops = {
      {"add", [&](auto& t, auto& p) { return add(P(t, p, "a"), P(t, p, "b")); }},
      {"add_row", [&](auto& t, auto& p) { return add(P(t, p, "a"), P(t, p, "r")); }},
      {"add_n", [&](auto& t, auto& p) { return add_n<double>({P(t, p, "a"), P(t, p, "b"), P(t, p, "a")}); }},
      {"sub", [&](auto& t, auto& p) { return sub(P(t, p, "a"), P(t, p, "b")); }},
      {"mul", [&](auto& t, auto& p) { return mul(P(t, p, "a"), P(t, p, "b")); }},
      {"scale", [&](auto& t, auto& p) { return scale(P(t, p, "a"), P(t, p, "s")); }},
      {"scale_const", [&](auto& t, auto& p) { return scale(P(t, p, "a"), 0.37); }},
      {"one_minus", [&](auto& t, auto& p) { return one_minus(P(t, p, "a")); }},
      {"sigmoid", [&](auto& t, auto& p) { return sigmoid(P(t, p, "a")); }},
      {"tanh", [&](auto& t, auto& p) { return ctxcap::tanh(P(t, p, "a")); }},
      {"exp", [&](auto& t, auto& p) { return ctxcap::exp(P(t, p, "a")); }},
      {"log", [&](auto& t, auto& p) { return ctxcap::log(sigmoid(P(t, p, "a"))); }},
      {"minimum", [&](auto& t, auto& p) { return minimum(P(t, p, "a"), P(t, p, "b")); }},
      {"softmax_rows", [&](auto& t, auto& p) { return softmax(P(t, p, "a"), 1); }},
      {"softmax_cols", [&](auto& t, auto& p) { return softmax(P(t, p, "a"), 0); }},
      {"softmax_vec", [&](auto& t, auto& p) { return softmax(P(t, p, "x")); }},
      {"softmax_masked", [&](auto& t, auto& p) { return softmax(P(t, p, "y"), std::size_t{1 + (m - 1) / 2}); }},
      {"sum", [&](auto& t, auto& p) { return sum(P(t, p, "a")); }},
      {"dot", [&](auto& t, auto& p) { return dot(P(t, p, "x"), P(t, p, "x")); }},
      {"matmul_mm", [&](auto& t, auto& p) { return matmul(P(t, p, "A"), P(t, p, "B")); }},
      {"matmul_mv", [&](auto& t, auto& p) { return matmul(P(t, p, "A"), P(t, p, "x")); }},
      {"matmul_vm", [&](auto& t, auto& p) { return matmul(P(t, p, "y"), P(t, p, "A")); }},
      {"matmul_nt", [&](auto& t, auto& p) { return matmul_nt(P(t, p, "A"), P(t, p, "C")); }},
      {"outer", [&](auto& t, auto& p) { return outer(P(t, p, "y"), P(t, p, "x")); }},
      {"concat", [&](auto& t, auto& p) { return concat<double>({P(t, p, "x"), P(t, p, "y")}); }},
      {"slice", [&](auto& t, auto& p) { return slice(P(t, p, "x"), k / 2, k - k / 2); }},
      {"row", [&](auto& t, auto& p) { return row(P(t, p, "A"), m - 1); }},
      {"stack", [&](auto& t, auto& p) { return stack<double>({P(t, p, "x"), P(t, p, "x")}); }},
      {"pick", [&](auto& t, auto& p) { return pick(P(t, p, "y"), m - 1); }},
      {"scatter_add",
       [&](auto& t, auto& p) {
         std::vector<std::size_t> idx(m);
         for (std::size_t i = 0; i < m; ++i) idx[i] = i % 2;
         return scatter_add(P(t, p, "y"), idx, 3);
       }},
      {"dropout",
       [&](auto& t, auto& p) {
         Rng mask(seed + 17);  // same mask on every evaluation
         return dropout(P(t, p, "a"), 0.4, true, mask);
       }},
  };
  for (const auto& [name, build] : ops) {
    auto loss = [&](Tape<double>& t) { return detail::probe(build(t, ps), seed + 99); };
    out.push_back({name, grad_check(loss, ps)});
  }

  const auto vocab = corpus::Vocabulary::from_words({"the", "walks", "into", "kitchen", "."});
  ModelConfig c;
  auto& s = c.s2vt;
  s.enc_steps = 2 + rng.below(std::min<std::size_t>(max_dim, 4) - 1);
  s.dec_steps = 6;
  s.video_feature_dim = dim();
  s.video_embed_dim = dim();
  s.word_embed_dim = dim();
  s.hidden_dim = 2 * (1 + rng.below(max_dim / 2));  // bidirectional halves need an even size
  s.attention_dim = dim();
  c.context_hidden = dim();
  c.context_attention_dim = dim();
  c.vocab_hidden = dim();
  c.max_context_len = 8;
  c.vocab_size = vocab.size();
  c.dropout = 0.0;
  c.coverage_lambda = 1.0;
  Tensor<float> features({s.enc_steps, s.video_feature_dim});
  for (auto& v : features.values()) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  const PreparedSample sample(features, vocab, {"homer", "walks", "into", "the", "kitchen", "homer"},
                              {"homer", "walks", "into", "the", "kitchen", "."});
  for (Variant v : {Variant::full, Variant::video_only, Variant::context_only}) {
    CaptionModel<double> model(c, seed);
    {
      Rng init(seed + 5);
      for (auto& [name, t] : model.params())
        for (auto& x : t.values()) x = init.uniform(-0.5, 0.5);
    }
    auto loss = [&](Tape<double>& t) {
      Rng unused(0);
      return model.loss(t, sample, v, false, unused).loss;
    };
    out.push_back({std::string("caption_loss/") + variant_name(v), grad_check(loss, model.params())});
  }
  return out;
}

}  // namespace ctxcap

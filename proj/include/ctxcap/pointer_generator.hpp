#pragma once

// Copy mechanism over a contextual text: coverage-aware attention over the
// context encoder states, a vocabulary distribution, the generation
// probability p_gen, and their mixture over the extended vocabulary.

#include <cstddef>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "ctxcap/autodiff.hpp"
#include "ctxcap/corpus/vocab.hpp"
#include "ctxcap/params.hpp"
#include "ctxcap/s2vt.hpp"

namespace ctxcap::pointer {

// Global vocabulary plus the sample's context-only words. Context words not
// in the global vocabulary get ids |V|, |V|+1, ... in order of first
// occurrence; repeated occurrences share one id.
class ExtendedVocab {
 public:
  ExtendedVocab(const corpus::Vocabulary& global, const std::vector<std::string>& context)
      : global_(&global), context_tokens_(context) {
    context_ids_.reserve(context.size());
    for (const auto& tok : context) {
      if (auto id = global.find(tok)) {
        context_ids_.push_back(*id);
        continue;
      }
      auto [it, inserted] = oov_index_.emplace(tok, global.size() + oov_.size());
      if (inserted) oov_.push_back(tok);
      context_ids_.push_back(it->second);
    }
  }

  std::size_t global_size() const { return global_->size(); }
  std::size_t size() const { return global_->size() + oov_.size(); }
  const std::vector<std::string>& oov_words() const { return oov_; }
  const std::vector<std::string>& context_tokens() const { return context_tokens_; }
  // Extended id of each context position.
  const std::vector<std::size_t>& context_ids() const { return context_ids_; }
  const corpus::Vocabulary& global() const { return *global_; }

  std::optional<std::size_t> find(const std::string& word) const {
    if (auto id = global_->find(word)) return id;
    auto it = oov_index_.find(word);
    if (it == oov_index_.end()) return std::nullopt;
    return it->second;
  }

  // Loss target: words in neither space map to the reserved UNK id.
  std::size_t target_id(const std::string& word) const { return find(word).value_or(corpus::kUnk); }

  // Decoder input id: OOV extended ids feed back as UNK.
  std::size_t input_id(std::size_t ext_id) const { return ext_id < global_size() ? ext_id : corpus::kUnk; }

  bool is_oov(std::size_t ext_id) const { return ext_id >= global_size() && ext_id < size(); }

  const std::string& word(std::size_t ext_id) const {
    if (ext_id < global_size()) return global_->word(ext_id);
    if (ext_id < size()) return oov_[ext_id - global_size()];
    throw std::out_of_range("extended id " + std::to_string(ext_id) + " out of range (size " +
                            std::to_string(size()) + ")");
  }

 private:
  const corpus::Vocabulary* global_;
  std::vector<std::string> context_tokens_;
  std::vector<std::string> oov_;
  std::unordered_map<std::string, std::size_t> oov_index_;
  std::vector<std::size_t> context_ids_;
};

struct PointerConfig {
  std::size_t word_embed_dim = 300;
  std::size_t decoder_hidden = 512;  // s^bottom
  std::size_t context_hidden = 256;  // per direction; h_i has twice this
  std::size_t attention_dim = 256;
  std::size_t vocab_hidden = 256;    // output of the first linear layer W
  std::size_t vocab_size = 0;        // |V|
  std::size_t max_context_len = 400;

  std::size_t state_dim() const { return 2 * context_hidden; }
};

template <class T>
void add_params(ParamStore<T>& params, const PointerConfig& cfg) {
  if (!cfg.vocab_size) throw std::invalid_argument("PointerConfig: vocab_size must be positive");
  const std::size_t D = cfg.state_dim(), H = cfg.decoder_hidden, A = cfg.attention_dim;
  s2vt::add_lstm_params(params, "context_lstm.fwd", cfg.word_embed_dim, cfg.context_hidden);
  s2vt::add_lstm_params(params, "context_lstm.bwd", cfg.word_embed_dim, cfg.context_hidden);
  params.add_uniform("pointer_att.W_h", {A, D}, D);
  params.add_uniform("pointer_att.W_s", {A, H}, H);
  params.add_uniform("pointer_att.w_c", {A}, A);
  params.add_zeros("pointer_att.b", {A});
  params.add_uniform("pointer_att.u", {A}, A);
  params.add_uniform("vocab.W", {cfg.vocab_hidden, H + D}, H + D);
  params.add_zeros("vocab.b", {cfg.vocab_hidden});
  params.add_uniform("vocab.W_out", {cfg.vocab_size, cfg.vocab_hidden}, cfg.vocab_hidden);
  params.add_zeros("vocab.b_out", {cfg.vocab_size});
  params.add_uniform("pgen.w_h", {D}, D);
  params.add_uniform("pgen.w_s", {H}, H);
  params.add_uniform("pgen.w_x", {cfg.word_embed_dim}, cfg.word_embed_dim);
  params.add_zeros("pgen.b", {1});
}

template <class T>
struct Weights {
  s2vt::LstmWeights<T> ctx_fwd, ctx_bwd;
  Var<T> W_h, W_s, w_c, b_attn, u;
  Var<T> W, b, W_out, b_out;
  Var<T> w_hstar, w_s, w_x, b_ptr;

  static Weights bind_all(Tape<T>& tape, ParamStore<T>& params, const std::set<std::string>& frozen = {}) {
    using s2vt::bind_param;
    Weights w;
    w.ctx_fwd = s2vt::bind_lstm(tape, params, "context_lstm.fwd", frozen);
    w.ctx_bwd = s2vt::bind_lstm(tape, params, "context_lstm.bwd", frozen);
    w.W_h = bind_param(tape, params, "pointer_att.W_h", frozen);
    w.W_s = bind_param(tape, params, "pointer_att.W_s", frozen);
    w.w_c = bind_param(tape, params, "pointer_att.w_c", frozen);
    w.b_attn = bind_param(tape, params, "pointer_att.b", frozen);
    w.u = bind_param(tape, params, "pointer_att.u", frozen);
    w.W = bind_param(tape, params, "vocab.W", frozen);
    w.b = bind_param(tape, params, "vocab.b", frozen);
    w.W_out = bind_param(tape, params, "vocab.W_out", frozen);
    w.b_out = bind_param(tape, params, "vocab.b_out", frozen);
    w.w_hstar = bind_param(tape, params, "pgen.w_h", frozen);
    w.w_s = bind_param(tape, params, "pgen.w_s", frozen);
    w.w_x = bind_param(tape, params, "pgen.w_x", frozen);
    w.b_ptr = bind_param(tape, params, "pgen.b", frozen);
    return w;
  }
};

template <class T>
struct ContextEncoding {
  Var<T> h;       // [M, 2*context_hidden]
  Var<T> h_proj;  // h · W_hᵀ [M, attention]
  std::size_t valid = 0;  // positions >= valid are padding, masked from attention

  std::size_t length() const { return h.value().rows(); }
};

// Bidirectional LSTM over embedded context words [M, word_embed]; h_i is the
// concatenation of both directions at position i. With `valid` < M the
// trailing rows are padding: they are encoded but masked from attention.
template <class T>
ContextEncoding<T> encode_context(Var<T> embedded, const Weights<T>& w, const PointerConfig& cfg,
                                  std::size_t valid = 0, s2vt::DropoutSpec drop = {}, Rng* rng = nullptr) {
  Tape<T>& tape = *embedded.tape();
  const Tensor<T>& ev = embedded.value();
  if (ev.rank() != 2 || ev.cols() != cfg.word_embed_dim)
    throw DimensionError("encode_context", ev.shape(), Shape{cfg.max_context_len, cfg.word_embed_dim});
  const std::size_t m = ev.rows();
  if (m > cfg.max_context_len)
    throw std::invalid_argument("encode_context: " + std::to_string(m) + " tokens exceed max_context_len=" +
                                std::to_string(cfg.max_context_len));
  if (valid == 0) valid = m;
  if (valid > m) throw std::invalid_argument("encode_context: valid length exceeds context length");
  std::vector<Var<T>> inputs(m);
  for (std::size_t i = 0; i < m; ++i) inputs[i] = row(embedded, i);
  std::vector<Var<T>> fwd(m), bwd(m);
  s2vt::LstmState<T> sf = s2vt::zero_state(tape, cfg.context_hidden);
  for (std::size_t i = 0; i < m; ++i) fwd[i] = (sf = s2vt::lstm_step(inputs[i], sf, w.ctx_fwd)).hidden;
  s2vt::LstmState<T> sb = s2vt::zero_state(tape, cfg.context_hidden);
  for (std::size_t i = m; i-- > 0;) bwd[i] = (sb = s2vt::lstm_step(inputs[i], sb, w.ctx_bwd)).hidden;
  std::vector<Var<T>> states(m);
  for (std::size_t i = 0; i < m; ++i) {
    states[i] = concat<T>({fwd[i], bwd[i]});
    if (rng) states[i] = dropout(states[i], drop.rate, drop.training, *rng);
  }
  ContextEncoding<T> enc;
  enc.h = stack(states);
  enc.h_proj = matmul_nt(enc.h, w.W_h);
  enc.valid = valid;
  return enc;
}

// Same, from global token ids looked up in the embedding matrix [|V|, word_embed].
template <class T>
ContextEncoding<T> encode_context(const std::vector<std::size_t>& tokens, Var<T> embedding, const Weights<T>& w,
                                  const PointerConfig& cfg) {
  if (tokens.empty()) throw std::invalid_argument("encode_context: empty context");
  std::vector<Var<T>> rows;
  rows.reserve(tokens.size());
  for (std::size_t id : tokens) rows.push_back(row(embedding, id));
  return encode_context(stack(rows), w, cfg);
}

// ξ = softmax(β), β_i = uᵀ tanh(W_h h_i + W_s s + w_c c_i + b_attn).
template <class T>
Var<T> context_attention(const ContextEncoding<T>& enc, Var<T> s_bottom, Var<T> coverage, const Weights<T>& w) {
  if (coverage.size() != enc.length())
    throw DimensionError("context_attention coverage", coverage.shape(), Shape{enc.length()});
  Var<T> query = add(matmul(w.W_s, s_bottom), w.b_attn);
  Var<T> pre = add(add(enc.h_proj, query), outer(coverage, w.w_c));
  Var<T> scores = matmul(tanh(pre), w.u);
  return softmax(scores, enc.valid);
}

// Coverage before step t: running sum of the previous attention distributions.
template <class T>
Var<T> initial_coverage(Tape<T>& tape, std::size_t m) {
  return tape.constant(Tensor<T>({m}));
}

template <class T>
Var<T> update_coverage(Var<T> coverage, Var<T> xi) {
  return add(coverage, xi);
}

// h* = Σ_i ξ_i h_i
template <class T>
Var<T> context_vector(const ContextEncoding<T>& enc, Var<T> xi) {
  return matmul(xi, enc.h);
}

// P_vocab = softmax(W_out (W [s, h*] + b) + b_out)
template <class T>
Var<T> vocab_distribution(Var<T> s_bottom, Var<T> h_star, const Weights<T>& w) {
  Var<T> hidden = add(matmul(w.W, concat<T>({s_bottom, h_star})), w.b);
  return softmax(add(matmul(w.W_out, hidden), w.b_out));
}

// p_gen = σ(w_h*ᵀ h* + w_sᵀ s + w_xᵀ x + b_ptr), shape [1].
template <class T>
Var<T> generation_prob(Var<T> h_star, Var<T> s_bottom, Var<T> x, const Weights<T>& w) {
  return sigmoid(add_n<T>({dot(w.w_hstar, h_star), dot(w.w_s, s_bottom), dot(w.w_x, x), w.b_ptr}));
}

// P(y) = p_gen P_vocab(y) + (1 - p_gen) Σ_{i: z_i = y} ξ_i over the extended
// vocabulary; only the first `xi.size()` context ids are used.
template <class T>
Var<T> final_distribution(Var<T> p_vocab, Var<T> xi, Var<T> p_gen, const ExtendedVocab& vocab) {
  if (p_vocab.size() != vocab.global_size())
    throw DimensionError("final_distribution p_vocab", p_vocab.shape(), Shape{vocab.global_size()});
  std::vector<std::size_t> ids(vocab.context_ids().begin(),
                               vocab.context_ids().begin() + std::min(xi.size(), vocab.context_ids().size()));
  // Padding positions (beyond the real context) carry zero attention; park them on PAD.
  ids.resize(xi.size(), corpus::kPad);
  std::vector<std::size_t> identity(p_vocab.size());
  for (std::size_t i = 0; i < identity.size(); ++i) identity[i] = i;
  Var<T> generated = scale(scatter_add(p_vocab, std::move(identity), vocab.size()), p_gen);
  Var<T> copied = scale(scatter_add(xi, std::move(ids), vocab.size()), one_minus(p_gen));
  return add(generated, copied);
}

inline constexpr double kProbabilityFloor = 1e-12;

// -log P(y*) + λ Σ_i min(ξ_i, c_i); P(y*) is floored at 1e-12 before the log.
template <class T>
Var<T> step_loss(Var<T> p_final, std::size_t target, Var<T> xi, Var<T> coverage, double lambda) {
  Var<T> nll = scale(log(pick(p_final, target), T(kProbabilityFloor)), T(-1));
  if (lambda == 0.0 || !xi.valid()) return nll;
  return add(nll, scale(sum(minimum(xi, coverage)), T(lambda)));
}

template <class T>
struct StepOutput {
  Var<T> xi;
  Var<T> p_vocab;
  Var<T> p_gen;
  Var<T> p_final;
  Var<T> coverage_after;
  Var<T> h_star;
};

// Full pointer-generator step for decoder state s and decoder input x.
template <class T>
StepOutput<T> pointer_step(const ContextEncoding<T>& enc, Var<T> s_bottom, Var<T> x, Var<T> coverage,
                           const ExtendedVocab& vocab, const Weights<T>& w) {
  StepOutput<T> out;
  out.xi = context_attention(enc, s_bottom, coverage, w);
  out.h_star = context_vector(enc, out.xi);
  out.p_vocab = vocab_distribution(s_bottom, out.h_star, w);
  out.p_gen = generation_prob(out.h_star, s_bottom, x, w);
  out.p_final = final_distribution(out.p_vocab, out.xi, out.p_gen, vocab);
  out.coverage_after = update_coverage(coverage, out.xi);
  return out;
}

}  // namespace ctxcap::pointer

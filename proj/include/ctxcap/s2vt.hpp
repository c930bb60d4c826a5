#pragma once

// Stacked video encoder-decoder: a bidirectional top LSTM over embedded frame
// features and a unidirectional bottom LSTM that, while decoding, attends over
// the top layer's encoder states. Both stages share one set of stack weights.

#include <cstddef>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "ctxcap/autodiff.hpp"
#include "ctxcap/params.hpp"

namespace ctxcap::s2vt {

struct S2VTConfig {
  std::size_t enc_steps = 10;
  std::size_t dec_steps = 30;
  std::size_t video_feature_dim = 4096;
  std::size_t video_embed_dim = 500;
  std::size_t word_embed_dim = 300;
  std::size_t hidden_dim = 512;
  std::size_t attention_dim = 256;

  void validate() const {
    if (!enc_steps || !dec_steps || !video_feature_dim || !video_embed_dim || !word_embed_dim || !hidden_dim ||
        !attention_dim)
      throw std::invalid_argument("S2VTConfig: all dimensions must be positive");
    if (hidden_dim % 2 != 0)
      throw std::invalid_argument("S2VTConfig: hidden_dim must be even (bidirectional halves concatenate)");
  }
  std::size_t half() const { return hidden_dim / 2; }
};

template <class T>
struct LstmState {
  Var<T> hidden;
  Var<T> cell;
};

template <class T>
LstmState<T> zero_state(Tape<T>& tape, std::size_t dim) {
  return {tape.constant(Tensor<T>({dim})), tape.constant(Tensor<T>({dim}))};
}

// Registers an LSTM cell: W [4h, in+h] and b [4h] under `prefix`.
template <class T>
void add_lstm_params(ParamStore<T>& params, const std::string& prefix, std::size_t input_dim, std::size_t hidden) {
  params.add_uniform(prefix + ".W", {4 * hidden, input_dim + hidden}, input_dim + hidden);
  params.add_zeros(prefix + ".b", {4 * hidden});
}

template <class T>
struct LstmWeights {
  Var<T> W;
  Var<T> b;

  std::size_t hidden() const { return b.size() / 4; }
  std::size_t input_dim() const { return W.shape()[1] - hidden(); }
};

template <class T>
Var<T> bind_param(Tape<T>& tape, ParamStore<T>& params, const std::string& name, const std::set<std::string>& frozen) {
  return tape.parameter(params.at(name), frozen.count(name) == 0);
}

template <class T>
LstmWeights<T> bind_lstm(Tape<T>& tape, ParamStore<T>& params, const std::string& prefix,
                         const std::set<std::string>& frozen) {
  return {bind_param(tape, params, prefix + ".W", frozen), bind_param(tape, params, prefix + ".b", frozen)};
}

// Standard LSTM cell, gate order (input, forget, candidate, output):
//   [i f g o] = W [x, h] + b;  c' = σ(f)c + σ(i)tanh(g);  h' = σ(o)tanh(c')
template <class T>
LstmState<T> lstm_step(Var<T> x, const LstmState<T>& state, const LstmWeights<T>& w) {
  const std::size_t h = w.hidden();
  if (x.value().rank() != 1 || x.size() != w.input_dim())
    throw DimensionError("lstm_step input", x.shape(), Shape{w.input_dim()});
  if (state.hidden.size() != h || state.cell.size() != h)
    throw DimensionError("lstm_step state", state.hidden.shape(), Shape{h});
  Var<T> gates = add(matmul(w.W, concat<T>({x, state.hidden})), w.b);
  Var<T> i = sigmoid(slice(gates, 0, h));
  Var<T> f = sigmoid(slice(gates, h, h));
  Var<T> g = tanh(slice(gates, 2 * h, h));
  Var<T> o = sigmoid(slice(gates, 3 * h, h));
  Var<T> c = add(mul(f, state.cell), mul(i, g));
  return {mul(o, tanh(c)), c};
}

template <class T>
void add_params(ParamStore<T>& params, const S2VTConfig& cfg) {
  cfg.validate();
  params.add_uniform("frame_embed.W", {cfg.video_embed_dim, cfg.video_feature_dim}, cfg.video_feature_dim);
  params.add_zeros("frame_embed.b", {cfg.video_embed_dim});
  add_lstm_params(params, "top_lstm.fwd", cfg.video_embed_dim, cfg.half());
  add_lstm_params(params, "top_lstm.bwd", cfg.video_embed_dim, cfg.half());
  add_lstm_params(params, "bottom_lstm", cfg.word_embed_dim + 2 * cfg.hidden_dim, cfg.hidden_dim);
  params.add_uniform("temporal_att.W_key", {cfg.attention_dim, cfg.hidden_dim}, cfg.hidden_dim);
  params.add_uniform("temporal_att.W_query", {cfg.attention_dim, cfg.hidden_dim}, cfg.hidden_dim);
  params.add_zeros("temporal_att.b", {cfg.attention_dim});
  params.add_uniform("temporal_att.v", {cfg.attention_dim}, cfg.attention_dim);
}

// Names of the top (video-modelling) LSTM parameters, frozen in the
// intermediate transfer stage.
inline std::set<std::string> top_lstm_param_names() {
  return {"top_lstm.fwd.W", "top_lstm.fwd.b", "top_lstm.bwd.W", "top_lstm.bwd.b"};
}

template <class T>
struct Weights {
  Var<T> frame_W, frame_b;
  LstmWeights<T> top_fwd, top_bwd, bottom;
  Var<T> att_key, att_query, att_b, att_v;

  static Weights bind_all(Tape<T>& tape, ParamStore<T>& params, const std::set<std::string>& frozen = {}) {
    Weights w;
    w.frame_W = bind_param(tape, params, "frame_embed.W", frozen);
    w.frame_b = bind_param(tape, params, "frame_embed.b", frozen);
    w.top_fwd = bind_lstm(tape, params, "top_lstm.fwd", frozen);
    w.top_bwd = bind_lstm(tape, params, "top_lstm.bwd", frozen);
    w.bottom = bind_lstm(tape, params, "bottom_lstm", frozen);
    w.att_key = bind_param(tape, params, "temporal_att.W_key", frozen);
    w.att_query = bind_param(tape, params, "temporal_att.W_query", frozen);
    w.att_b = bind_param(tape, params, "temporal_att.b", frozen);
    w.att_v = bind_param(tape, params, "temporal_att.v", frozen);
    return w;
  }
};

// Per-frame affine embedding with weights shared across time:
// features [N, F] -> [N, E].
template <class T>
Var<T> embed_frames(Var<T> features, Var<T> W, Var<T> b) {
  if (features.value().rank() != 2 || features.value().cols() != W.shape()[1])
    throw DimensionError("embed_frames", features.shape(), W.shape());
  return add(matmul_nt(features, W), b);
}

template <class T>
struct EncoderOutputs {
  std::vector<Var<T>> top_states;  // s_j^top, j < enc_steps: attention keys
  Var<T> keys;                     // top_states stacked [enc_steps, hidden]
  Var<T> key_proj;                 // keys · W_keyᵀ [enc_steps, attention]
  LstmState<T> top_fwd;            // forward-direction state after the last frame
  LstmState<T> bottom;             // bottom state after the last frame

  bool valid() const { return keys.valid(); }
};

struct DropoutSpec {
  double rate = 0.0;
  bool training = false;
};

// Encoding stage. `embedded` holds one embedded frame per row (at most
// enc_steps rows); the sequence is right-padded with zero vectors. The top
// layer runs in both directions over all enc_steps positions; the bottom layer
// runs alongside on [0, s_t^top, 0]. No output of this stage feeds the loss.
template <class T>
EncoderOutputs<T> encode(Var<T> embedded, const Weights<T>& w, const S2VTConfig& cfg, DropoutSpec drop = {},
                         Rng* rng = nullptr) {
  Tape<T>& tape = *embedded.tape();
  const Tensor<T>& ev = embedded.value();
  if (ev.rank() != 2 || ev.cols() != cfg.video_embed_dim)
    throw DimensionError("encode", ev.shape(), Shape{cfg.enc_steps, cfg.video_embed_dim});
  const std::size_t n = ev.rows();
  if (n == 0) throw std::invalid_argument("encode: empty video");
  if (n > cfg.enc_steps)
    throw std::invalid_argument("encode: " + std::to_string(n) + " frames exceed enc_steps=" +
                                std::to_string(cfg.enc_steps));
  std::vector<Var<T>> inputs;
  inputs.reserve(cfg.enc_steps);
  for (std::size_t t = 0; t < n; ++t) inputs.push_back(row(embedded, t));
  Var<T> pad;
  if (n < cfg.enc_steps) pad = tape.constant(Tensor<T>({cfg.video_embed_dim}));
  for (std::size_t t = n; t < cfg.enc_steps; ++t) inputs.push_back(pad);

  const std::size_t half = cfg.half();
  std::vector<Var<T>> fwd(cfg.enc_steps), bwd(cfg.enc_steps);
  LstmState<T> sf = zero_state(tape, half);
  for (std::size_t t = 0; t < cfg.enc_steps; ++t) {
    sf = lstm_step(inputs[t], sf, w.top_fwd);
    fwd[t] = sf.hidden;
  }
  LstmState<T> sb = zero_state(tape, half);
  for (std::size_t t = cfg.enc_steps; t-- > 0;) {
    sb = lstm_step(inputs[t], sb, w.top_bwd);
    bwd[t] = sb.hidden;
  }

  EncoderOutputs<T> out;
  out.top_fwd = sf;
  Var<T> zero_word = tape.constant(Tensor<T>({cfg.word_embed_dim}));
  Var<T> zero_ctx = tape.constant(Tensor<T>({cfg.hidden_dim}));
  LstmState<T> bottom = zero_state(tape, cfg.hidden_dim);
  for (std::size_t t = 0; t < cfg.enc_steps; ++t) {
    Var<T> top = concat<T>({fwd[t], bwd[t]});
    if (rng) top = dropout(top, drop.rate, drop.training, *rng);
    out.top_states.push_back(top);
    bottom = lstm_step(concat<T>({zero_word, top, zero_ctx}), bottom, w.bottom);
  }
  out.bottom = bottom;
  out.keys = stack(out.top_states);
  out.key_proj = matmul_nt(out.keys, w.att_key);
  return out;
}

template <class T>
struct AttentionResult {
  Var<T> context;  // s*_t
  Var<T> weights;  // η_t
};

// Additive attention: α_j = vᵀ tanh(W_key s_j^top + W_query q + b), η = softmax(α),
// s* = Σ_j η_j s_j^top. `key_proj` is the precomputed W_key-projection of `keys`.
template <class T>
AttentionResult<T> temporal_attention(Var<T> keys, Var<T> key_proj, Var<T> query, const Weights<T>& w) {
  Var<T> q = add(matmul(w.att_query, query), w.att_b);
  Var<T> scores = matmul(tanh(add(key_proj, q)), w.att_v);
  Var<T> eta = softmax(scores);
  return {matmul(eta, keys), eta};
}

template <class T>
AttentionResult<T> temporal_attention(const std::vector<Var<T>>& top_states, Var<T> query, const Weights<T>& w) {
  if (top_states.empty()) throw std::invalid_argument("temporal_attention: no encoder states");
  Var<T> keys = stack(top_states);
  return temporal_attention(keys, matmul_nt(keys, w.att_key), query, w);
}

// Recurrent carry of the stack between decode steps.
template <class T>
struct DecoderCarry {
  LstmState<T> top_fwd;
  LstmState<T> bottom;
};

template <class T>
DecoderCarry<T> initial_carry(const EncoderOutputs<T>& enc) {
  return {enc.top_fwd, enc.bottom};
}

template <class T>
struct DecodeStepResult {
  DecoderCarry<T> carry;
  Var<T> bottom_hidden;  // s_t^bottom
  Var<T> eta;
};

// One decoding step. The top layer advances in the forward direction on a
// zero (padding) frame with its backward half zero-filled; the bottom layer
// consumes [x_t, s_t^top, s*_t] where s*_t attends with query s_{t-1}^bottom.
template <class T>
DecodeStepResult<T> decode_step(Var<T> word, const DecoderCarry<T>& carry, const EncoderOutputs<T>& enc,
                                const Weights<T>& w, const S2VTConfig& cfg, DropoutSpec drop = {},
                                Rng* rng = nullptr) {
  if (!enc.valid()) throw std::logic_error("decode_step called before encode");
  Tape<T>& tape = *word.tape();
  if (word.size() != cfg.word_embed_dim)
    throw DimensionError("decode_step word", word.shape(), Shape{cfg.word_embed_dim});
  DecodeStepResult<T> r;
  r.carry.top_fwd = lstm_step(tape.constant(Tensor<T>({cfg.video_embed_dim})), carry.top_fwd, w.top_fwd);
  Var<T> top = concat<T>({r.carry.top_fwd.hidden, tape.constant(Tensor<T>({cfg.half()}))});
  if (rng) top = dropout(top, drop.rate, drop.training, *rng);
  AttentionResult<T> att = temporal_attention(enc.keys, enc.key_proj, carry.bottom.hidden, w);
  r.carry.bottom = lstm_step(concat<T>({word, top, att.context}), carry.bottom, w.bottom);
  r.bottom_hidden = r.carry.bottom.hidden;
  if (rng) r.bottom_hidden = dropout(r.bottom_hidden, drop.rate, drop.training, *rng);
  r.eta = att.weights;
  return r;
}

}  // namespace ctxcap::s2vt

#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "ctxcap/autodiff.hpp"
#include "ctxcap/corpus/vocab.hpp"
#include "ctxcap/params.hpp"
#include "ctxcap/pointer_generator.hpp"
#include "ctxcap/s2vt.hpp"

namespace ctxcap {

enum class Variant { full, video_only, context_only };

inline const char* variant_name(Variant v) {
  switch (v) {
    case Variant::full: return "full";
    case Variant::video_only: return "video_only";
    case Variant::context_only: return "context_only";
  }
  return "?";
}

inline Variant parse_variant(const std::string& s) {
  if (s == "full") return Variant::full;
  if (s == "video_only") return Variant::video_only;
  if (s == "context_only") return Variant::context_only;
  throw std::invalid_argument("unknown variant '" + s + "' (full|video_only|context_only)");
}

struct ModelConfig {
  s2vt::S2VTConfig s2vt;
  std::size_t context_hidden = 256;
  std::size_t context_attention_dim = 256;
  std::size_t vocab_hidden = 256;
  std::size_t max_context_len = 400;
  std::size_t vocab_size = 0;
  double dropout = 0.5;
  double coverage_lambda = 1.0;

  pointer::PointerConfig pointer() const {
    pointer::PointerConfig p;
    p.word_embed_dim = s2vt.word_embed_dim;
    p.decoder_hidden = s2vt.hidden_dim;
    p.context_hidden = context_hidden;
    p.attention_dim = context_attention_dim;
    p.vocab_hidden = vocab_hidden;
    p.vocab_size = vocab_size;
    p.max_context_len = max_context_len;
    return p;
  }
};

// One model input: frame features, the contextual text and (for training)
// the reference caption, already mapped against a global vocabulary.
struct PreparedSample {
  Tensor<float> features;                  // [N, feature_dim]
  pointer::ExtendedVocab ext;              // built over the (cropped) context
  std::vector<std::size_t> context_input;  // global ids per context position, OOV -> UNK
  std::vector<std::string> caption;        // reference tokens (may be empty at inference)

  PreparedSample(Tensor<float> f, const corpus::Vocabulary& vocab, std::vector<std::string> context,
                 std::vector<std::string> caption_tokens)
      : features(std::move(f)), ext(vocab, context), caption(std::move(caption_tokens)) {
    context_input = vocab.encode(context);
  }
};

// Value snapshot of the recurrent decoder state, used by inference where each
// hypothesis carries its own state.
template <class T>
struct DecoderSnapshot {
  Tensor<T> top_h, top_c, bottom_h, bottom_c;
  Tensor<T> coverage;  // empty when the variant has no context
};

template <class T>
struct LossResult {
  Var<T> loss;  // mean over decode steps
  std::size_t steps = 0;
};

template <class T>
class CaptionModel {
 public:
  CaptionModel(ModelConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)), params_(seed) {
    cfg_.s2vt.validate();
    if (!cfg_.vocab_size) throw std::invalid_argument("ModelConfig: vocab_size must be positive");
    params_.add_uniform("word_embed.E", {cfg_.vocab_size, cfg_.s2vt.word_embed_dim}, cfg_.s2vt.word_embed_dim);
    s2vt::add_params(params_, cfg_.s2vt);
    pointer::add_params(params_, cfg_.pointer());
  }

  // Adopts existing parameters (e.g. from a checkpoint); names and shapes must
  // match the configuration.
  CaptionModel(ModelConfig cfg, ParamStore<T> params) : CaptionModel(cfg, params.rng_seed()) {
    for (auto& [name, t] : params_) {
      if (!params.contains(name)) throw FormatError("checkpoint lacks parameter '" + name + "'");
      if (params.at(name).shape() != t.shape())
        throw DimensionError("checkpoint parameter " + name, params.at(name).shape(), t.shape());
    }
    if (params.size() != params_.size()) throw FormatError("checkpoint has parameters unknown to this model");
    params_ = std::move(params);
  }

  const ModelConfig& config() const { return cfg_; }
  ParamStore<T>& params() { return params_; }
  const ParamStore<T>& params() const { return params_; }

  struct Bound {
    s2vt::Weights<T> video;
    pointer::Weights<T> ptr;
    Var<T> embed;
  };

  Bound bind(Tape<T>& tape, const std::set<std::string>& frozen = {}) {
    return {s2vt::Weights<T>::bind_all(tape, params_, frozen), pointer::Weights<T>::bind_all(tape, params_, frozen),
            s2vt::bind_param(tape, params_, "word_embed.E", frozen)};
  }

  // Binds every parameter as a constant (inference).
  Bound bind_frozen(Tape<T>& tape) {
    std::set<std::string> all;
    for (const auto& [name, _] : params_) all.insert(name);
    return bind(tape, all);
  }

  struct Encoded {
    s2vt::EncoderOutputs<T> video;
    std::optional<pointer::ContextEncoding<T>> context;
  };

  Encoded encode(Tape<T>& tape, const Bound& w, const PreparedSample& sample, Variant variant,
                 s2vt::DropoutSpec drop, Rng* rng) const {
    const auto& s = cfg_.s2vt;
    if (sample.features.rank() != 2 || sample.features.cols() != s.video_feature_dim)
      throw DimensionError("features", sample.features.shape(), Shape{s.enc_steps, s.video_feature_dim});
    Tensor<T> feats = sample.features.template cast<T>();
    if (feats.rows() > s.enc_steps) {
      feats = Tensor<T>({s.enc_steps, s.video_feature_dim},
                        std::vector<T>(feats.data().begin(), feats.data().begin() + s.enc_steps * s.video_feature_dim));
    }
    if (variant == Variant::context_only) std::fill(feats.data().begin(), feats.data().end(), T(0));
    Var<T> frames = tape.constant(std::move(feats));
    if (rng) frames = dropout(frames, drop.rate, drop.training, *rng);
    Encoded enc;
    enc.video = s2vt::encode(s2vt::embed_frames(frames, w.video.frame_W, w.video.frame_b), w.video, s, drop, rng);
    if (variant != Variant::video_only) {
      if (sample.context_input.empty()) throw std::invalid_argument("encode: empty context");
      std::vector<Var<T>> words;
      words.reserve(sample.context_input.size());
      for (std::size_t id : sample.context_input) {
        Var<T> z = row(w.embed, id);
        if (rng) z = dropout(z, drop.rate, drop.training, *rng);
        words.push_back(z);
      }
      enc.context = pointer::encode_context(stack(words), w.ptr, cfg_.pointer(), 0, drop, rng);
    }
    return enc;
  }

  struct StepVars {
    s2vt::DecoderCarry<T> carry;
    Var<T> coverage;  // coverage before this step (invalid without context)
    Var<T> coverage_after;
    Var<T> xi, eta, p_gen, p_final;
  };

  // Decoder step consuming input token `input_id` (global id; OOV inputs must
  // already be mapped to UNK).
  StepVars step(Tape<T>& tape, const Bound& w, const Encoded& enc, const s2vt::DecoderCarry<T>& carry,
                Var<T> coverage, std::size_t input_id, const PreparedSample& sample, Variant variant,
                s2vt::DropoutSpec drop, Rng* rng) const {
    Var<T> x = row(w.embed, input_id);
    if (rng) x = dropout(x, drop.rate, drop.training, *rng);
    auto dec = s2vt::decode_step(x, carry, enc.video, w.video, cfg_.s2vt, drop, rng);
    StepVars out;
    out.carry = dec.carry;
    out.eta = dec.eta;
    out.coverage = coverage;
    if (variant == Variant::video_only) {
      Var<T> h_star = tape.constant(Tensor<T>({cfg_.pointer().state_dim()}));
      out.p_final = pointer::vocab_distribution(dec.bottom_hidden, h_star, w.ptr);
      out.p_gen = tape.constant(Tensor<T>::scalar(T(1)));
      return out;
    }
    auto ps = pointer::pointer_step(*enc.context, dec.bottom_hidden, x, coverage, sample.ext, w.ptr);
    out.xi = ps.xi;
    out.p_gen = ps.p_gen;
    out.p_final = ps.p_final;
    out.coverage_after = ps.coverage_after;
    return out;
  }

  // Loss target ids for a caption (+EOS), truncated to the decode length.
  std::vector<std::size_t> targets(const PreparedSample& sample, Variant variant) const {
    std::vector<std::size_t> ids;
    for (const auto& tok : sample.caption) {
      if (ids.size() + 1 >= cfg_.s2vt.dec_steps) break;
      ids.push_back(variant == Variant::video_only ? sample.ext.global().id_or_unk(tok) : sample.ext.target_id(tok));
    }
    ids.push_back(corpus::kEos);
    return ids;
  }

  // Teacher-forced mean per-step loss. Parameters named in `frozen` are read
  // but receive no gradient.
  LossResult<T> loss(Tape<T>& tape, const PreparedSample& sample, Variant variant, bool training, Rng& rng,
                     const std::set<std::string>& frozen = {}) {
    Bound w = bind(tape, frozen);
    const s2vt::DropoutSpec drop{cfg_.dropout, training};
    Rng* r = training ? &rng : nullptr;
    Encoded enc = encode(tape, w, sample, variant, drop, r);
    const std::vector<std::size_t> tgt = targets(sample, variant);
    s2vt::DecoderCarry<T> carry = s2vt::initial_carry(enc.video);
    Var<T> coverage;
    if (enc.context) coverage = pointer::initial_coverage(tape, enc.context->length());
    std::vector<Var<T>> losses;
    std::size_t input = corpus::kBos;
    for (std::size_t t = 0; t < tgt.size(); ++t) {
      StepVars sv = step(tape, w, enc, carry, coverage, input, sample, variant, drop, r);
      losses.push_back(pointer::step_loss(sv.p_final, tgt[t], sv.xi, coverage, cfg_.coverage_lambda));
      carry = sv.carry;
      if (sv.coverage_after.valid()) coverage = sv.coverage_after;
      input = sample.ext.input_id(tgt[t]);
    }
    LossResult<T> res;
    res.steps = losses.size();
    res.loss = scale(add_n(losses), T(1.0 / static_cast<double>(losses.size())));
    return res;
  }

 private:
  ModelConfig cfg_;
  ParamStore<T> params_;
};

// Per-sample inference adapter for the decoders: owns a tape holding the
// encoded inputs and re-injects each hypothesis' decoder state as constants.
template <class T>
class ModelStepper {
 public:
  using State = DecoderSnapshot<T>;

  ModelStepper(CaptionModel<T>& model, const PreparedSample& sample, Variant variant)
      : model_(&model), sample_(&sample), variant_(variant) {
    w_ = model.bind_frozen(tape_);
    enc_ = model.encode(tape_, w_, sample, variant, {}, nullptr);
  }

  std::size_t vocab_size() const {
    return variant_ == Variant::video_only ? sample_->ext.global_size() : sample_->ext.size();
  }
  std::size_t input_id(std::size_t token) const { return sample_->ext.input_id(token); }

  State initial() const {
    State s;
    s.top_h = enc_.video.top_fwd.hidden.value();
    s.top_c = enc_.video.top_fwd.cell.value();
    s.bottom_h = enc_.video.bottom.hidden.value();
    s.bottom_c = enc_.video.bottom.cell.value();
    if (enc_.context) s.coverage = Tensor<T>({enc_.context->length()});
    return s;
  }

  struct Output {
    std::vector<double> probs;
    State next;
    double p_gen = 1.0;
    std::vector<double> xi;
    std::vector<double> eta;
  };

  Output step(const State& state, std::size_t token) {
    s2vt::DecoderCarry<T> carry{{tape_.constant(state.top_h), tape_.constant(state.top_c)},
                                {tape_.constant(state.bottom_h), tape_.constant(state.bottom_c)}};
    Var<T> coverage;
    if (enc_.context) coverage = tape_.constant(state.coverage);
    auto sv = model_->step(tape_, w_, enc_, carry, coverage, input_id(token), *sample_, variant_, {}, nullptr);
    Output out;
    const auto pf = sv.p_final.value().values();
    out.probs.assign(pf.begin(), pf.end());
    out.next.top_h = sv.carry.top_fwd.hidden.value();
    out.next.top_c = sv.carry.top_fwd.cell.value();
    out.next.bottom_h = sv.carry.bottom.hidden.value();
    out.next.bottom_c = sv.carry.bottom.cell.value();
    if (sv.coverage_after.valid()) out.next.coverage = sv.coverage_after.value();
    out.p_gen = static_cast<double>(sv.p_gen.item());
    if (sv.xi.valid()) {
      const auto x = sv.xi.value().values();
      out.xi.assign(x.begin(), x.end());
    }
    const auto e = sv.eta.value().values();
    out.eta.assign(e.begin(), e.end());
    return out;
  }

  std::vector<double> coverage_of(const State& s) const {
    return std::vector<double>(s.coverage.values().begin(), s.coverage.values().end());
  }

 private:
  CaptionModel<T>* model_;
  const PreparedSample* sample_;
  Variant variant_;
  Tape<T> tape_;
  typename CaptionModel<T>::Bound w_;
  typename CaptionModel<T>::Encoded enc_;
};

}  // namespace ctxcap

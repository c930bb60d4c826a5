#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ctxcap/decoding.hpp"
#include "ctxcap/model.hpp"

namespace ctxcap::harness {

enum class Stage { pretrain_s2vt, frozen_top, end_to_end };

inline const char* stage_name(Stage s) {
  switch (s) {
    case Stage::pretrain_s2vt: return "pretrain-s2vt";
    case Stage::frozen_top: return "frozen-top";
    case Stage::end_to_end: return "end-to-end";
  }
  return "?";
}

inline Stage parse_stage(const std::string& s) {
  if (s == "pretrain-s2vt") return Stage::pretrain_s2vt;
  if (s == "frozen-top") return Stage::frozen_top;
  if (s == "end-to-end") return Stage::end_to_end;
  throw std::invalid_argument("unknown stage '" + s + "' (pretrain-s2vt|frozen-top|end-to-end)");
}

struct StagePlan {
  Stage stage = Stage::end_to_end;
  std::size_t max_epochs = 10;
};

struct ExperimentConfig {
  std::string preset = "lsmdc-ad";
  ModelConfig model;  // architecture, dropout, coverage lambda, context length
  std::size_t beam_width = 1;
  double repetition_beta = 0.2;
  double learning_rate = 1e-4;
  double clip_norm = 0.0;
  std::size_t batch_size = 16;
  std::size_t patience = 5;
  std::size_t max_vocab = 20000;
  std::vector<StagePlan> stages = {{Stage::pretrain_s2vt, 20}, {Stage::frozen_top, 20}, {Stage::end_to_end, 20}};
  Variant variant = Variant::full;
  std::uint64_t seed = 1;
  bool freeze_top_lstm = false;  // freeze the top layer in every stage, not only frozen-top
  std::string load_checkpoint;   // initial parameters, if set

  void validate() const {
    model.s2vt.validate();
    if (batch_size == 0) throw std::invalid_argument("batch_size must be positive");
    if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be positive");
    if (!(model.dropout >= 0.0 && model.dropout < 1.0)) throw std::invalid_argument("dropout must be in [0,1)");
    if (!(model.coverage_lambda >= 0.0)) throw std::invalid_argument("coverage lambda must be >= 0");
    if (model.max_context_len == 0) throw std::invalid_argument("max_context_len must be positive");
    decode_config({}).validate();
  }

  decoding::DecodeConfig decode_config(std::unordered_set<std::size_t> exempt) const {
    decoding::DecodeConfig d;
    d.beam_width = beam_width;
    d.repetition_beta = repetition_beta;
    d.max_len = model.s2vt.dec_steps;
    d.exempt = std::move(exempt);
    return d;
  }
};

// Full-size presets plus a desk-scale one for the synthetic task.
inline ExperimentConfig preset(const std::string& name) {
  ExperimentConfig c;
  c.preset = name;
  auto& s = c.model.s2vt;
  if (name == "news") {
    s.enc_steps = 60;
    s.dec_steps = 60;
    c.model.max_context_len = 400;
  } else if (name == "lsmdc-ad" || name == "lsmdc") {
    s.enc_steps = 10;
    s.dec_steps = 30;
    c.model.max_context_len = 400;
  } else if (name == "lsmdc-script") {
    s.enc_steps = 10;
    s.dec_steps = 30;
    c.model.max_context_len = 600;
  } else if (name == "synthetic") {
    s.enc_steps = 6;
    s.dec_steps = 12;
    s.video_feature_dim = 16;
    s.video_embed_dim = 16;
    s.word_embed_dim = 16;
    s.hidden_dim = 32;
    s.attention_dim = 16;
    c.model.context_hidden = 16;
    c.model.context_attention_dim = 16;
    c.model.vocab_hidden = 32;
    c.model.max_context_len = 40;
    c.model.dropout = 0.0;
    c.learning_rate = 5e-3;
    c.clip_norm = 5.0;
    c.max_vocab = 50;
    c.stages = {{Stage::pretrain_s2vt, 3}, {Stage::frozen_top, 4}, {Stage::end_to_end, 8}};
  } else {
    throw std::invalid_argument("unknown preset '" + name + "' (news|lsmdc-ad|lsmdc-script|synthetic)");
  }
  return c;
}

inline nlohmann::json to_json(const ExperimentConfig& c) {
  const auto& m = c.model;
  const auto& s = m.s2vt;
  nlohmann::json stages = nlohmann::json::array();
  for (const auto& p : c.stages) stages.push_back({{"stage", stage_name(p.stage)}, {"max_epochs", p.max_epochs}});
  return {{"preset", c.preset},
          {"model",
           {{"enc_steps", s.enc_steps},
            {"dec_steps", s.dec_steps},
            {"video_feature_dim", s.video_feature_dim},
            {"video_embed_dim", s.video_embed_dim},
            {"word_embed_dim", s.word_embed_dim},
            {"hidden_dim", s.hidden_dim},
            {"attention_dim", s.attention_dim},
            {"context_hidden", m.context_hidden},
            {"context_attention_dim", m.context_attention_dim},
            {"vocab_hidden", m.vocab_hidden},
            {"max_context_len", m.max_context_len},
            {"dropout", m.dropout},
            {"coverage_lambda", m.coverage_lambda}}},
          {"decode", {{"beam_width", c.beam_width}, {"repetition_beta", c.repetition_beta}}},
          {"train",
           {{"learning_rate", c.learning_rate},
            {"clip_norm", c.clip_norm},
            {"batch_size", c.batch_size},
            {"patience", c.patience},
            {"max_vocab", c.max_vocab},
            {"stages", stages},
            {"variant", variant_name(c.variant)},
            {"seed", c.seed},
            {"freeze_top_lstm", c.freeze_top_lstm},
            {"load_checkpoint", c.load_checkpoint}}}};
}

// Starts from the named preset (default lsmdc-ad) and overrides whatever
// keys are present. Unknown keys are rejected so typos do not pass silently.
inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  ExperimentConfig c = preset(j.value("preset", std::string("lsmdc-ad")));
  auto check_keys = [](const nlohmann::json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
      bool ok = false;
      for (const char* a : allowed) ok |= it.key() == a;
      if (!ok) throw std::invalid_argument("config: unknown key '" + where + it.key() + "'");
    }
  };
  check_keys(j, {"preset", "model", "decode", "train"}, "");
  auto get = [](const nlohmann::json& obj, const char* key, auto& dst) {
    if (obj.contains(key)) dst = obj.at(key).get<std::decay_t<decltype(dst)>>();
  };
  if (j.contains("model")) {
    const auto& m = j.at("model");
    check_keys(m,
               {"enc_steps", "dec_steps", "video_feature_dim", "video_embed_dim", "word_embed_dim", "hidden_dim",
                "attention_dim", "context_hidden", "context_attention_dim", "vocab_hidden", "max_context_len",
                "dropout", "coverage_lambda"},
               "model.");
    auto& s = c.model.s2vt;
    get(m, "enc_steps", s.enc_steps);
    get(m, "dec_steps", s.dec_steps);
    get(m, "video_feature_dim", s.video_feature_dim);
    get(m, "video_embed_dim", s.video_embed_dim);
    get(m, "word_embed_dim", s.word_embed_dim);
    get(m, "hidden_dim", s.hidden_dim);
    get(m, "attention_dim", s.attention_dim);
    get(m, "context_hidden", c.model.context_hidden);
    get(m, "context_attention_dim", c.model.context_attention_dim);
    get(m, "vocab_hidden", c.model.vocab_hidden);
    get(m, "max_context_len", c.model.max_context_len);
    get(m, "dropout", c.model.dropout);
    get(m, "coverage_lambda", c.model.coverage_lambda);
  }
  if (j.contains("decode")) {
    const auto& d = j.at("decode");
    check_keys(d, {"beam_width", "repetition_beta"}, "decode.");
    get(d, "beam_width", c.beam_width);
    get(d, "repetition_beta", c.repetition_beta);
  }
  if (j.contains("train")) {
    const auto& t = j.at("train");
    check_keys(t,
               {"learning_rate", "clip_norm", "batch_size", "patience", "max_vocab", "stages", "variant", "seed",
                "freeze_top_lstm", "load_checkpoint"},
               "train.");
    get(t, "learning_rate", c.learning_rate);
    get(t, "clip_norm", c.clip_norm);
    get(t, "batch_size", c.batch_size);
    get(t, "patience", c.patience);
    get(t, "max_vocab", c.max_vocab);
    get(t, "seed", c.seed);
    get(t, "freeze_top_lstm", c.freeze_top_lstm);
    get(t, "load_checkpoint", c.load_checkpoint);
    if (t.contains("variant")) c.variant = parse_variant(t.at("variant").get<std::string>());
    if (t.contains("stages")) {
      c.stages.clear();
      for (const auto& st : t.at("stages"))
        c.stages.push_back({parse_stage(st.at("stage").get<std::string>()), st.value("max_epochs", std::size_t{10})});
    }
  }
  c.validate();
  return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config '" + path.string() + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("config '" + path.string() + "': " + e.what());
  }
  return config_from_json(j);
}

}  // namespace ctxcap::harness

#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "ctxcap/corpus/manifest.hpp"
#include "ctxcap/corpus/tokenize.hpp"
#include "ctxcap/corpus/vocab.hpp"
#include "ctxcap/harness/config.hpp"
#include "ctxcap/harness/synthetic.hpp"
#include "ctxcap/model.hpp"

namespace ctxcap::harness {

struct Example {
  std::string clip_id;
  std::string movie_id;
  PreparedSample sample;
  std::set<std::string> names;
};

// Examples refer to the vocabulary through their extended vocabularies, so
// the vocabulary lives behind a stable pointer.
struct Dataset {
  std::shared_ptr<const corpus::Vocabulary> vocab;
  std::vector<Example> train, val, test;

  const std::vector<Example>& split(const std::string& name) const {
    if (name == "train") return train;
    if (name == "val") return val;
    if (name == "test") return test;
    throw std::invalid_argument("unknown split '" + name + "'");
  }
};

inline std::vector<std::string> split_tokens(const std::string& s) { return corpus::tokenize(s); }

inline corpus::Vocabulary vocab_from_training(const std::vector<corpus::ManifestRecord>& records,
                                              std::size_t max_size) {
  std::vector<std::vector<std::string>> docs;
  for (const auto& r : records) {
    if (r.split != "train") continue;
    docs.push_back(split_tokens(r.caption));
    docs.push_back(split_tokens(r.context));
  }
  return corpus::build_vocab(docs, max_size);
}

// `features_of(i)` loads the frame features of record i.
inline Dataset make_dataset(std::shared_ptr<const corpus::Vocabulary> vocab,
                            const std::vector<corpus::ManifestRecord>& records,
                            const std::function<Tensor<float>(std::size_t)>& features_of, std::size_t max_context_len) {
  Dataset ds;
  ds.vocab = std::move(vocab);
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    auto context = split_tokens(r.context);
    if (context.size() > max_context_len) context.resize(max_context_len);
    if (context.empty()) throw corpus::DataError("record '" + r.clip_id + "' has an empty context");
    Example ex{r.clip_id, r.movie_id, PreparedSample(features_of(i), *ds.vocab, context, split_tokens(r.caption)),
               std::set<std::string>(r.names.begin(), r.names.end())};
    if (r.split == "train") ds.train.push_back(std::move(ex));
    else if (r.split == "val") ds.val.push_back(std::move(ex));
    else if (r.split == "test") ds.test.push_back(std::move(ex));
    else throw corpus::DataError("record '" + r.clip_id + "' has unknown split '" + r.split + "'");
  }
  return ds;
}

// Uses `vocab_file` when given (or vocab.tsv next to the manifest when it
// exists), otherwise builds the vocabulary from the training split.
inline Dataset load_dataset(const corpus::Manifest& m, const ExperimentConfig& cfg,
                            std::optional<std::filesystem::path> vocab_file = std::nullopt) {
  if (!vocab_file && std::filesystem::exists(m.base_dir / "vocab.tsv")) vocab_file = m.base_dir / "vocab.tsv";
  auto vocab = std::make_shared<corpus::Vocabulary>(vocab_file ? corpus::Vocabulary::load(vocab_file->string())
                                                               : vocab_from_training(m.records, cfg.max_vocab));
  return make_dataset(vocab, m.records, [&](std::size_t i) { return corpus::read_features(m.feature_path(m.records[i])); },
                      cfg.model.max_context_len);
}

inline Dataset dataset_from_synthetic(const SyntheticData& d, std::size_t max_context_len) {
  auto vocab = std::make_shared<corpus::Vocabulary>(synthetic_vocabulary(d));
  return make_dataset(vocab, d.records, [&](std::size_t i) { return d.features[i]; }, max_context_len);
}

}  // namespace ctxcap::harness

#pragma once

#include <algorithm>
#include <filesystem>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "ctxcap/corpus/manifest.hpp"
#include "ctxcap/corpus/tokenize.hpp"
#include "ctxcap/corpus/vocab.hpp"
#include "ctxcap/rng.hpp"
#include "ctxcap/tensor.hpp"

namespace ctxcap::harness {

// A desk-scale stand-in for movie clips with contextual text. The frames
// encode which of `templates` actions happens; the names and the location
// are only recoverable from the context, and never belong to the global
// vocabulary. With list_length > 0 the caption is instead a long list of
// names copied from the context, in order. With contexts_per_clip > 1 every
// clip gets several context documents, each holding the carrier sentence
// among different distractors.
struct SyntheticTaskSpec {
  std::size_t global_vocab = 50;  // upper bound, specials included
  std::size_t name_pool = 200;
  std::size_t location_pool = 40;
  std::size_t templates = 8;
  std::size_t frames = 6;
  std::size_t feature_dim = 16;
  double feature_noise = 0.3;
  std::size_t train = 2000;
  std::size_t val = 200;
  std::size_t test = 200;
  std::size_t noise_sentences = 2;
  std::size_t list_length = 0;
  std::size_t contexts_per_clip = 1;  // >1: one record per context document, sharing clip id and features
  std::uint64_t seed = 1;
};

struct SyntheticData {
  std::vector<std::string> vocabulary;  // global words, specials excluded
  std::vector<std::string> names, locations;
  std::vector<corpus::ManifestRecord> records;
  std::vector<Tensor<float>> features;  // parallel to records
};

namespace detail {

inline const std::vector<std::pair<std::string, std::string>>& actions() {
  static const std::vector<std::pair<std::string, std::string>> a = {
      {"walk", "into"}, {"sit", "in"},    {"run", "through"}, {"wait", "outside"},
      {"dance", "in"},  {"sleep", "near"}, {"look", "around"}, {"eat", "in"}};
  return a;
}

inline const std::vector<std::string>& nouns() {
  static const std::vector<std::string> n = {"weather", "news", "report", "city", "rain", "night", "day"};
  return n;
}

inline const std::vector<std::string>& adjectives() {
  static const std::vector<std::string> a = {"cold", "late", "quiet", "long", "early"};
  return a;
}

inline std::vector<std::string> grammar_words(const SyntheticTaskSpec& spec) {
  std::vector<std::string> w = {".", ",", "the", "was", "very", "people", "said", "everyone", "stayed", "home", "it"};
  for (const auto& n : nouns()) w.push_back(n);
  for (const auto& a : adjectives()) w.push_back(a);
  if (spec.list_length > 0) {
    w.insert(w.end(), {"list", "is"});
  } else {
    w.insert(w.end(), {"and", "met", "at", "today"});
    for (std::size_t t = 0; t < spec.templates; ++t) {
      w.push_back(actions()[t].first);
      w.push_back(actions()[t].second);
    }
  }
  std::vector<std::string> out;
  for (const auto& x : w)
    if (std::find(out.begin(), out.end(), x) == out.end()) out.push_back(x);
  return out;
}

inline std::vector<std::string> make_pool(Rng& rng, std::size_t n, const std::vector<std::string>& first,
                                          const std::vector<std::string>& last, const std::set<std::string>& taken) {
  std::set<std::string> seen = taken;
  std::vector<std::string> out;
  std::size_t attempts = 0;
  while (out.size() < n) {
    if (++attempts > 100 * n + 1000) throw std::invalid_argument("synthetic: cannot draw enough distinct fillers");
    std::string w = first[rng.below(first.size())] + first[rng.below(first.size())] + last[rng.below(last.size())];
    if (seen.insert(w).second) out.push_back(w);
  }
  return out;
}

inline std::vector<std::string> distractor(Rng& rng) {
  const auto& n = nouns();
  const auto& a = adjectives();
  switch (rng.below(3)) {
    case 0: return {"the", n[rng.below(n.size())], "was", "very", a[rng.below(a.size())], "."};
    case 1: return {"people", "said", "the", n[rng.below(n.size())], "was", a[rng.below(a.size())], "."};
    default: return {"everyone", "stayed", "home", "it", "was", a[rng.below(a.size())], "."};
  }
}

}  // namespace detail

inline SyntheticData generate_synthetic(const SyntheticTaskSpec& spec) {
  if (spec.list_length == 0 && (spec.templates == 0 || spec.templates > detail::actions().size()))
    throw std::invalid_argument("synthetic: templates must be in [1, " + std::to_string(detail::actions().size()) + "]");
  if (spec.feature_dim < std::max<std::size_t>(spec.templates, 1) || spec.frames == 0)
    throw std::invalid_argument("synthetic: feature_dim must cover the template one-hot and frames > 0");
  const std::size_t per_sample_names = spec.list_length > 0 ? spec.list_length : 2;
  if (spec.name_pool < per_sample_names) throw std::invalid_argument("synthetic: name pool smaller than a sample needs");
  if (spec.list_length == 0 && spec.location_pool == 0) throw std::invalid_argument("synthetic: empty location pool");
  if (spec.contexts_per_clip == 0) throw std::invalid_argument("synthetic: contexts_per_clip must be positive");

  SyntheticData d;
  d.vocabulary = detail::grammar_words(spec);
  if (d.vocabulary.size() + corpus::kNumSpecials > spec.global_vocab)
    throw std::invalid_argument("synthetic: global vocabulary of " + std::to_string(spec.global_vocab) +
                                " is too small for the grammar, which needs " +
                                std::to_string(d.vocabulary.size() + corpus::kNumSpecials));

  Rng rng(spec.seed);
  const std::set<std::string> taken(d.vocabulary.begin(), d.vocabulary.end());
  d.names = detail::make_pool(rng, spec.name_pool, {"ka", "lo", "ri", "ze", "mu", "ta", "vi", "no", "sha", "bel"},
                              {"n", "ra", "th", "ck", "ly", "mo", "x", "di"}, taken);
  std::set<std::string> taken2 = taken;
  taken2.insert(d.names.begin(), d.names.end());
  if (spec.list_length == 0)
    d.locations = detail::make_pool(rng, spec.location_pool, {"mar", "kel", "dor", "fen", "bri", "os"},
                                    {"port", "ton", "field", "mere", "gate"}, taken2);
  for (const auto& w : d.names)
    if (taken.count(w)) throw std::logic_error("synthetic: filler '" + w + "' collides with the vocabulary");

  const std::size_t total = spec.train + spec.val + spec.test;
  for (std::size_t i = 0; i < total; ++i) {
    corpus::ManifestRecord r;
    r.clip_id = "syn" + std::to_string(i);
    r.split = i < spec.train ? "train" : i < spec.train + spec.val ? "val" : "test";
    r.movie_id = "synthetic-" + r.split;
    r.context_source = "synthetic";

    std::vector<std::string> carrier, caption;
    std::size_t tmpl = 0;
    if (spec.list_length > 0) {
      std::vector<std::string> chosen;
      while (chosen.size() < spec.list_length) {
        const auto& n = d.names[rng.below(d.names.size())];
        if (std::find(chosen.begin(), chosen.end(), n) == chosen.end()) chosen.push_back(n);
      }
      carrier = {"the", "list", "is"};
      for (std::size_t k = 0; k < chosen.size(); ++k) {
        if (k) {
          carrier.push_back(",");
          caption.push_back(",");
        }
        carrier.push_back(chosen[k]);
        caption.push_back(chosen[k]);
      }
      carrier.push_back(".");
      caption.push_back(".");
      r.names = chosen;
    } else {
      tmpl = rng.below(spec.templates);
      const std::string n1 = d.names[rng.below(d.names.size())];
      std::string n2;
      do n2 = d.names[rng.below(d.names.size())];
      while (n2 == n1);
      const std::string loc = d.locations[rng.below(d.locations.size())];
      carrier = {n1, "met", n2, "at", "the", loc, "today", "."};
      caption = {n1, "and", n2, detail::actions()[tmpl].first, detail::actions()[tmpl].second, "the", loc, "."};
      r.names = {n1, n2};
    }

    r.caption = corpus::join(caption);
    r.features = "features/" + r.clip_id + ".bin";

    Tensor<float> f({spec.frames, spec.feature_dim});
    for (std::size_t t = 0; t < spec.frames; ++t)
      for (std::size_t c = 0; c < spec.feature_dim; ++c) {
        const double base = c == tmpl ? 1.0 : 0.0;
        f.values()[t * spec.feature_dim + c] =
            static_cast<float>(base + rng.uniform(-spec.feature_noise, spec.feature_noise));
      }

    for (std::size_t doc = 0; doc < spec.contexts_per_clip; ++doc) {
      std::vector<std::vector<std::string>> sentences;
      for (std::size_t k = 0; k < spec.noise_sentences; ++k) sentences.push_back(detail::distractor(rng));
      const std::size_t at = rng.below(sentences.size() + 1);
      sentences.insert(sentences.begin() + static_cast<std::ptrdiff_t>(at), carrier);
      std::vector<std::string> context;
      for (const auto& s : sentences) context.insert(context.end(), s.begin(), s.end());
      corpus::ManifestRecord rd = r;
      rd.context = corpus::join(context);
      d.records.push_back(std::move(rd));
      d.features.push_back(f);
    }
  }
  return d;
}

inline corpus::Vocabulary synthetic_vocabulary(const SyntheticData& d) {
  return corpus::Vocabulary::from_words(d.vocabulary);
}

// manifest.jsonl, vocab.tsv and features/<clip>.bin under `dir`.
inline std::filesystem::path write_synthetic(const SyntheticData& d, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "features");
  for (std::size_t i = 0; i < d.records.size(); ++i) corpus::write_features(dir / d.records[i].features, d.features[i]);
  synthetic_vocabulary(d).save((dir / "vocab.tsv").string());
  corpus::write_manifest(dir / "manifest.jsonl", d.records);
  return dir / "manifest.jsonl";
}

}  // namespace ctxcap::harness

#pragma once

// Greedy and beam-search decoding over any step model exposing
//   State initial();
//   Output step(const State&, std::size_t input_token);   // Output{probs, next, ...}
//   std::size_t vocab_size();
// Scores are summed logs of the repetition-penalized probabilities.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <set>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "ctxcap/corpus/vocab.hpp"
#include "ctxcap/pointer_generator.hpp"

namespace ctxcap::decoding {

struct DecodeConfig {
  std::size_t beam_width = 1;
  double repetition_beta = 0.2;
  std::size_t max_len = 30;
  std::size_t bos = corpus::kBos;
  std::size_t eos = corpus::kEos;
  // Ids never penalized for repetition (specials, punctuation); ignored when
  // penalize_all is set.
  std::unordered_set<std::size_t> exempt;
  bool penalize_all = false;

  void validate() const {
    if (beam_width < 1) throw std::invalid_argument("beam_width must be >= 1");
    if (!(repetition_beta >= 0.0 && repetition_beta <= 1.0))
      throw std::invalid_argument("repetition_beta must be in [0,1]");
    if (max_len < 1) throw std::invalid_argument("max_len must be >= 1");
  }
};

// Special and punctuation ids of a global vocabulary.
inline std::unordered_set<std::size_t> exempt_ids(const corpus::Vocabulary& vocab) {
  std::unordered_set<std::size_t> ids;
  for (std::size_t i = 0; i < vocab.size(); ++i)
    if (corpus::is_special_or_punct(vocab.word(i))) ids.insert(i);
  return ids;
}

// Multiplies P(y) by beta for every already-emitted, non-exempt y. The result
// is not renormalized; it is only used for ranking.
inline std::vector<double> apply_repetition_penalty(std::vector<double> probs, const std::set<std::size_t>& emitted,
                                                    double beta, const DecodeConfig& cfg) {
  for (std::size_t y : emitted) {
    if (y >= probs.size()) continue;
    if (!cfg.penalize_all && cfg.exempt.count(y)) continue;
    probs[y] *= beta;
  }
  return probs;
}

inline std::vector<double> apply_repetition_penalty(std::vector<double> probs, const std::set<std::size_t>& emitted,
                                                    double beta) {
  DecodeConfig cfg;
  cfg.penalize_all = true;
  return apply_repetition_penalty(std::move(probs), emitted, beta, cfg);
}

struct StepTrace {
  std::size_t step = 0;
  std::size_t token = 0;
  std::string word;
  double probability = 0.0;  // penalized score of the chosen token
  double p_gen = 1.0;
  std::vector<double> attention;  // ξ_t over context positions
  std::vector<double> coverage;   // coverage after this step
  std::vector<double> temporal;   // η_t over encoder steps
};

struct DecodeResult {
  std::vector<std::size_t> tokens;  // without the terminating EOS
  double score = 0.0;
  bool finished = false;  // ended by EOS rather than max_len
  std::vector<StepTrace> traces;
};

namespace detail {

inline double safe_log(double p) { return p > 0.0 ? std::log(p) : -std::numeric_limits<double>::infinity(); }

template <class Output>
StepTrace make_trace(std::size_t t, std::size_t token, double prob, const Output& out) {
  StepTrace tr;
  tr.step = t;
  tr.token = token;
  tr.probability = prob;
  if constexpr (requires { out.p_gen; }) tr.p_gen = out.p_gen;
  if constexpr (requires { out.xi; }) tr.attention = out.xi;
  if constexpr (requires { out.eta; }) tr.temporal = out.eta;
  if constexpr (requires { out.next.coverage; }) {
    const auto c = out.next.coverage.values();
    tr.coverage.assign(c.begin(), c.end());
  }
  return tr;
}

// Lexicographic order on (tokens, finished) as the final tie-break.
inline bool better(const DecodeResult& a, const DecodeResult& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.tokens != b.tokens) return a.tokens < b.tokens;
  return a.finished && !b.finished;
}

}  // namespace detail

// Picks the highest penalized probability at each step; ties go to the lowest id.
template <class Model>
DecodeResult greedy_decode(Model& model, const DecodeConfig& cfg) {
  cfg.validate();
  DecodeResult res;
  auto state = model.initial();
  std::size_t input = cfg.bos;
  std::set<std::size_t> emitted;
  for (std::size_t t = 0; t < cfg.max_len; ++t) {
    auto out = model.step(state, input);
    const auto adj = apply_repetition_penalty(out.probs, emitted, cfg.repetition_beta, cfg);
    const std::size_t best = static_cast<std::size_t>(std::max_element(adj.begin(), adj.end()) - adj.begin());
    res.score += detail::safe_log(adj[best]);
    res.traces.push_back(detail::make_trace(t, best, adj[best], out));
    if (best == cfg.eos) {
      res.finished = true;
      break;
    }
    res.tokens.push_back(best);
    emitted.insert(best);
    state = std::move(out.next);
    input = best;
  }
  return res;
}

// Beam search without length normalization. Each step keeps the top
// beam_width expansions of all live hypotheses; expansions ending in EOS are
// retired, so the live set may shrink. The best of retired and surviving
// hypotheses is returned.
template <class Model>
DecodeResult beam_search(Model& model, const DecodeConfig& cfg) {
  cfg.validate();
  using State = decltype(model.initial());
  struct Hyp {
    DecodeResult result;
    State state;
    std::size_t input;
    std::set<std::size_t> emitted;
  };
  struct Candidate {
    double score;
    std::size_t parent;
    std::size_t token;
    double prob;
  };

  std::vector<Hyp> live;
  live.push_back({DecodeResult{}, model.initial(), cfg.bos, {}});
  std::vector<DecodeResult> done;
  for (std::size_t t = 0; t < cfg.max_len && !live.empty(); ++t) {
    std::vector<Candidate> cands;
    std::vector<decltype(model.step(live[0].state, 0))> outs;
    outs.reserve(live.size());
    for (std::size_t h = 0; h < live.size(); ++h) {
      outs.push_back(model.step(live[h].state, live[h].input));
      const auto adj = apply_repetition_penalty(outs.back().probs, live[h].emitted, cfg.repetition_beta, cfg);
      for (std::size_t y = 0; y < adj.size(); ++y)
        cands.push_back({live[h].result.score + detail::safe_log(adj[y]), h, y, adj[y]});
    }
    const std::size_t keep = std::min(cfg.beam_width, cands.size());
    std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(keep), cands.end(),
                      [](const Candidate& a, const Candidate& b) {
                        if (a.score != b.score) return a.score > b.score;
                        if (a.parent != b.parent) return a.parent < b.parent;
                        return a.token < b.token;
                      });
    std::vector<Hyp> next;
    for (std::size_t k = 0; k < keep; ++k) {
      const Candidate& c = cands[k];
      const Hyp& parent = live[c.parent];
      DecodeResult r = parent.result;
      r.score = c.score;
      r.traces.push_back(detail::make_trace(t, c.token, c.prob, outs[c.parent]));
      if (c.token == cfg.eos) {
        r.finished = true;
        done.push_back(std::move(r));
        continue;
      }
      r.tokens.push_back(c.token);
      Hyp h{std::move(r), outs[c.parent].next, c.token, parent.emitted};
      h.emitted.insert(c.token);
      next.push_back(std::move(h));
    }
    live = std::move(next);
  }
  for (auto& h : live) done.push_back(std::move(h.result));
  if (done.empty()) return {};
  return *std::min_element(done.begin(), done.end(),
                           [](const DecodeResult& a, const DecodeResult& b) { return detail::better(a, b); });
}

template <class Model>
DecodeResult decode(Model& model, const DecodeConfig& cfg) {
  return cfg.beam_width == 1 ? greedy_decode(model, cfg) : beam_search(model, cfg);
}

// Extended ids to words: global ids through the dictionary, OOV ids to the
// context surface form they were copied from.
inline std::vector<std::string> resolve_tokens(const std::vector<std::size_t>& ids,
                                               const pointer::ExtendedVocab& vocab) {
  std::vector<std::string> words;
  words.reserve(ids.size());
  for (std::size_t id : ids) words.push_back(vocab.word(id));
  return words;
}

// Among decodes of the same video with different context documents, the most
// probable finished hypothesis wins (unfinished ones only if none finished).
inline std::size_t best_of(const std::vector<DecodeResult>& results) {
  if (results.empty()) throw std::invalid_argument("best_of: no results");
  std::size_t best = 0;
  for (std::size_t i = 1; i < results.size(); ++i) {
    const auto& a = results[i];
    const auto& b = results[best];
    if (a.finished != b.finished) {
      if (a.finished) best = i;
      continue;
    }
    if (a.score > b.score) best = i;
  }
  return best;
}

}  // namespace ctxcap::decoding

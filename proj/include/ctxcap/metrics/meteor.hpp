#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "ctxcap/metrics/porter.hpp"
#include "ctxcap/metrics/rouge.hpp"

namespace ctxcap::metrics {

struct MeteorOptions {
  double alpha = 0.9;
  double gamma = 0.5;
  double beta = 3.0;  // penalty exponent
  bool stemming = true;
};

struct MeteorBreakdown {
  std::size_t matches = 0;
  std::size_t chunks = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f_mean = 0.0;
  double penalty = 0.0;
  double score = 0.0;
};

// Candidate position -> reference position, or -1. Exact matches first, then
// stem matches among the leftovers; within a stage each candidate token, left
// to right, takes the leftmost free reference token.
inline std::vector<long> meteor_alignment(const Tokens& candidate, const Tokens& reference, bool stemming) {
  std::vector<long> align(candidate.size(), -1);
  std::vector<bool> used(reference.size(), false);
  auto stage = [&](auto&& key) {
    std::vector<std::string> rk;
    for (const auto& r : reference) rk.push_back(key(r));
    for (std::size_t i = 0; i < candidate.size(); ++i) {
      if (align[i] >= 0) continue;
      const std::string ck = key(candidate[i]);
      for (std::size_t j = 0; j < reference.size(); ++j)
        if (!used[j] && rk[j] == ck) {
          align[i] = static_cast<long>(j);
          used[j] = true;
          break;
        }
    }
  };
  stage([](const std::string& w) { return w; });
  if (stemming) stage([](const std::string& w) { return porter_stem(w); });
  return align;
}

inline MeteorBreakdown meteor_lite_breakdown(const Tokens& candidate, const Tokens& reference, MeteorOptions opt = {}) {
  if (reference.empty()) throw std::invalid_argument("meteor_lite: empty reference");
  MeteorBreakdown b;
  const auto align = meteor_alignment(candidate, reference, opt.stemming);
  long prev = -2;
  for (long j : align) {
    if (j < 0) {
      prev = -2;
      continue;
    }
    ++b.matches;
    if (j != prev + 1) ++b.chunks;
    prev = j;
  }
  if (b.matches == 0) return b;
  const auto m = static_cast<double>(b.matches);
  b.precision = m / static_cast<double>(candidate.size());
  b.recall = m / static_cast<double>(reference.size());
  b.f_mean = b.precision * b.recall / (opt.alpha * b.precision + (1.0 - opt.alpha) * b.recall);
  b.penalty = opt.gamma * std::pow(static_cast<double>(b.chunks) / m, opt.beta);
  b.score = b.f_mean * (1.0 - b.penalty);
  return b;
}

inline double meteor_lite(const Tokens& candidate, const Tokens& reference, MeteorOptions opt = {}) {
  return meteor_lite_breakdown(candidate, reference, opt).score;
}

}  // namespace ctxcap::metrics

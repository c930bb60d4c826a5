#pragma once

#include <cmath>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "ctxcap/metrics/rouge.hpp"

namespace ctxcap::metrics {

struct CiderResult {
  double corpus = 0.0;  // mean of the per-sample scores
  std::vector<double> per_sample;
};

struct CiderOptions {
  std::size_t max_n = 4;
  double sigma = 6.0;
};

namespace detail {

using NgramCounts = std::map<Tokens, double>;

inline NgramCounts ngrams(const Tokens& s, std::size_t n) {
  NgramCounts out;
  for (std::size_t i = 0; i + n <= s.size(); ++i) out[Tokens(s.begin() + static_cast<std::ptrdiff_t>(i), s.begin() + static_cast<std::ptrdiff_t>(i + n))] += 1.0;
  return out;
}

}  // namespace detail

// CIDEr-D: per n, TF-IDF vectors over n-grams (document frequency counted
// over the reference sets), candidate weights clipped at the reference
// weight, cosine-normalized, times a Gaussian penalty on the length
// difference. Averaged over n and over references. The conventional x10
// factor is left to the caller, so identical sentences score 1.
inline CiderResult cider(const std::vector<Tokens>& candidates, const std::vector<std::vector<Tokens>>& references,
                         CiderOptions opt = {}) {
  if (candidates.size() != references.size()) throw std::invalid_argument("cider: candidate/reference count mismatch");
  if (candidates.size() < 2) throw std::invalid_argument("cider: needs a corpus of at least two samples");
  const std::size_t N = candidates.size();

  std::vector<std::map<Tokens, double>> df(opt.max_n + 1);
  for (const auto& refs : references) {
    if (refs.empty()) throw std::invalid_argument("cider: sample without references");
    for (std::size_t n = 1; n <= opt.max_n; ++n) {
      std::set<Tokens> seen;
      for (const auto& r : refs)
        for (const auto& [g, _] : detail::ngrams(r, n)) seen.insert(g);
      for (const auto& g : seen) df[n][g] += 1.0;
    }
  }
  const double log_n = std::log(static_cast<double>(N));

  auto vectorize = [&](const Tokens& s, std::size_t n, double& norm) {
    auto v = detail::ngrams(s, n);
    norm = 0.0;
    for (auto& [g, w] : v) {
      auto it = df[n].find(g);
      const double d = it == df[n].end() ? 1.0 : std::max(1.0, it->second);
      w *= log_n - std::log(d);
      norm += w * w;
    }
    norm = std::sqrt(norm);
    return v;
  };

  CiderResult out;
  for (std::size_t i = 0; i < N; ++i) {
    double total = 0.0;
    for (const auto& ref : references[i]) {
      const double delta = static_cast<double>(candidates[i].size()) - static_cast<double>(ref.size());
      const double penalty = std::exp(-delta * delta / (2.0 * opt.sigma * opt.sigma));
      double score = 0.0;
      for (std::size_t n = 1; n <= opt.max_n; ++n) {
        double nc, nr;
        const auto vc = vectorize(candidates[i], n, nc);
        const auto vr = vectorize(ref, n, nr);
        double dot = 0.0;
        for (const auto& [g, w] : vc) {
          auto it = vr.find(g);
          if (it != vr.end()) dot += std::min(w, it->second) * it->second;
        }
        if (nc > 0.0 && nr > 0.0) score += penalty * dot / (nc * nr);
      }
      total += score / static_cast<double>(opt.max_n);
    }
    out.per_sample.push_back(total / static_cast<double>(references[i].size()));
    out.corpus += out.per_sample.back();
  }
  out.corpus /= static_cast<double>(N);
  return out;
}

inline CiderResult cider(const std::vector<Tokens>& candidates, const std::vector<Tokens>& references,
                         CiderOptions opt = {}) {
  std::vector<std::vector<Tokens>> refs;
  for (const auto& r : references) refs.push_back({r});
  return cider(candidates, refs, opt);
}

}  // namespace ctxcap::metrics

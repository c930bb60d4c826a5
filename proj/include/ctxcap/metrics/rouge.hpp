#pragma once

#include <algorithm>
#include <stdexcept>
#include <string>
#include <vector>

namespace ctxcap::metrics {

using Tokens = std::vector<std::string>;

inline std::size_t lcs_length(const Tokens& a, const Tokens& b) {
  std::vector<std::size_t> row(b.size() + 1, 0);
  for (const auto& x : a) {
    std::size_t diag = 0;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t up = row[j];
      row[j] = x == b[j - 1] ? diag + 1 : std::max(row[j], row[j - 1]);
      diag = up;
    }
  }
  return row[b.size()];
}

// LCS F-measure with recall weighted by beta.
inline double rouge_l(const Tokens& candidate, const Tokens& reference, double beta = 1.2) {
  if (reference.empty()) throw std::invalid_argument("rouge_l: empty reference");
  if (candidate.empty()) return 0.0;
  const auto l = static_cast<double>(lcs_length(candidate, reference));
  if (l == 0.0) return 0.0;
  const double p = l / static_cast<double>(candidate.size());
  const double r = l / static_cast<double>(reference.size());
  const double b2 = beta * beta;
  return (1.0 + b2) * p * r / (r + b2 * p);
}

}  // namespace ctxcap::metrics

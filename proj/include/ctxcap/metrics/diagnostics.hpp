#pragma once

#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "ctxcap/corpus/vocab.hpp"
#include "ctxcap/metrics/rouge.hpp"

namespace ctxcap::metrics {

// Over all reference tokens that belong to their movie's name set, the
// fraction also present anywhere in the paired prediction. Empty when the
// references contain no names at all.
inline std::optional<double> name_recovery(const std::vector<Tokens>& predictions, const std::vector<Tokens>& references,
                                           const std::vector<std::set<std::string>>& name_sets) {
  if (predictions.size() != references.size() || references.size() != name_sets.size())
    throw std::invalid_argument("name_recovery: input lengths differ");
  std::size_t names = 0, hits = 0;
  for (std::size_t i = 0; i < references.size(); ++i) {
    const std::unordered_set<std::string> pred(predictions[i].begin(), predictions[i].end());
    for (const auto& t : references[i]) {
      if (!name_sets[i].count(t)) continue;
      ++names;
      hits += pred.count(t);
    }
  }
  if (names == 0) return std::nullopt;
  return static_cast<double>(hits) / static_cast<double>(names);
}

// 1 - distinct/total over tokens that are neither specials nor punctuation.
// Zero when there are no such tokens.
inline double repetition_rate(const Tokens& tokens) {
  std::size_t total = 0;
  std::unordered_set<std::string> distinct;
  for (const auto& t : tokens) {
    if (corpus::is_special_or_punct(t)) continue;
    ++total;
    distinct.insert(t);
  }
  if (total == 0) return 0.0;
  return 1.0 - static_cast<double>(distinct.size()) / static_cast<double>(total);
}

}  // namespace ctxcap::metrics

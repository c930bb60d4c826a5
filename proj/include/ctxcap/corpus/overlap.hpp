#pragma once

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "ctxcap/corpus/vocab.hpp"

namespace ctxcap::corpus {

inline const std::unordered_set<std::string>& stopwords() {
  static const std::unordered_set<std::string> words = {
      "a",    "an",   "the",  "and",  "or",    "but",  "if",    "of",   "to",    "in",
      "on",   "at",   "by",   "for",  "with",  "from", "into",  "onto", "up",    "down",
      "out",  "over", "as",   "is",   "are",   "was",  "were",  "be",   "been",  "it",
      "its",  "he",   "she",  "they", "them",  "his",  "her",   "their", "him",  "this",
      "that", "then", "than", "there", "some", "s",    "'s",    "not",  "so",    "who"};
  return words;
}

inline bool is_content_token(std::string_view tok) {
  return !is_special_or_punct(tok) && !stopwords().count(std::string(tok));
}

// Fraction of the caption's content-token types that occur anywhere in the
// context. Zero when the caption has no content tokens.
inline double compute_overlap(const std::vector<std::string>& caption, const std::vector<std::string>& context) {
  std::set<std::string> types;
  for (const auto& t : caption)
    if (is_content_token(t)) types.insert(t);
  if (types.empty()) return 0.0;
  const std::unordered_set<std::string> ctx(context.begin(), context.end());
  std::size_t hit = 0;
  for (const auto& t : types) hit += ctx.count(t);
  return static_cast<double>(hit) / static_cast<double>(types.size());
}

struct MovieOverlap {
  std::string movie_id;
  std::size_t clips = 0;
  double mean_overlap = 0.0;
  bool kept = false;
};

// Keeps whole movies whose mean clip overlap reaches `threshold`. `movie_of`
// and `overlap_of` read a record's movie id and overlap. Returns the kept
// records (input order) and fills `report` in movie-id order.
template <class Record, class MovieOf, class OverlapOf>
std::vector<Record> filter_movies(const std::vector<Record>& records, double threshold, MovieOf movie_of,
                                  OverlapOf overlap_of, std::vector<MovieOverlap>* report = nullptr) {
  std::map<std::string, std::pair<std::size_t, double>> acc;
  for (const auto& r : records) {
    auto& [n, sum] = acc[movie_of(r)];
    ++n;
    sum += overlap_of(r);
  }
  std::set<std::string> keep;
  if (report) report->clear();
  for (const auto& [movie, ns] : acc) {
    const double mean = ns.second / static_cast<double>(ns.first);
    const bool kept = mean >= threshold;
    if (kept) keep.insert(movie);
    if (report) report->push_back({movie, ns.first, mean, kept});
  }
  std::vector<Record> out;
  for (const auto& r : records)
    if (keep.count(movie_of(r))) out.push_back(r);
  return out;
}

}  // namespace ctxcap::corpus

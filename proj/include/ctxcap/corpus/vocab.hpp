#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cstddef>
#include <fstream>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace ctxcap::corpus {

// Reserved ids; specials occupy the lowest indices of every vocabulary.
enum Special : std::size_t { kPad = 0, kBos, kEos, kUnk, kNum, kDate, kTime, kNumSpecials };

inline constexpr std::array<std::string_view, kNumSpecials> kSpecialTokens = {
    "<pad>", "<bos>", "<eos>", "<unk>", "<num>", "<date>", "<time>"};

inline bool is_special(std::string_view token) {
  return std::find(kSpecialTokens.begin(), kSpecialTokens.end(), token) != kSpecialTokens.end();
}

// A token made only of ASCII punctuation characters.
inline bool is_punctuation(std::string_view token) {
  if (token.empty()) return false;
  return std::all_of(token.begin(), token.end(), [](unsigned char c) { return c < 0x80 && std::ispunct(c); });
}

// Tokens that carry no content: specials and punctuation.
inline bool is_special_or_punct(std::string_view token) { return is_special(token) || is_punctuation(token); }

class Vocabulary {
 public:
  Vocabulary() {
    for (auto s : kSpecialTokens) push(std::string(s), 0);
  }

  // Specials followed by `words` in the given order; duplicates and specials
  // in `words` are ignored.
  static Vocabulary from_words(const std::vector<std::string>& words) {
    Vocabulary v;
    for (const auto& w : words)
      if (!v.find(w)) v.push(w, 0);
    return v;
  }

  std::size_t size() const { return words_.size(); }

  std::optional<std::size_t> find(std::string_view word) const {
    auto it = index_.find(std::string(word));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }
  bool contains(std::string_view word) const { return find(word).has_value(); }
  std::size_t id_or_unk(std::string_view word) const { return find(word).value_or(kUnk); }

  const std::string& word(std::size_t id) const {
    if (id >= words_.size()) throw std::out_of_range("vocabulary id " + std::to_string(id) + " out of range");
    return words_[id];
  }
  std::size_t frequency(std::size_t id) const { return freq_.at(id); }
  const std::vector<std::string>& words() const { return words_; }

  std::vector<std::size_t> encode(const std::vector<std::string>& tokens) const {
    std::vector<std::size_t> ids;
    ids.reserve(tokens.size());
    for (const auto& t : tokens) ids.push_back(id_or_unk(t));
    return ids;
  }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.words_ == b.words_ && a.freq_ == b.freq_;
  }

  // One "token<TAB>count" line per entry, specials first.
  void save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write vocabulary '" + path + "'");
    for (std::size_t i = 0; i < words_.size(); ++i) out << words_[i] << '\t' << freq_[i] << '\n';
  }

  static Vocabulary load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open vocabulary '" + path + "'");
    Vocabulary v;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      const auto tab = line.find('\t');
      const std::string word = line.substr(0, tab);
      const std::size_t count = tab == std::string::npos ? 0 : std::stoul(line.substr(tab + 1));
      if (auto id = v.find(word)) {
        if (*id >= kNumSpecials)
          throw std::runtime_error("vocabulary '" + path + "' line " + std::to_string(lineno) + ": duplicate '" +
                                   word + "'");
        v.freq_[*id] = count;
        continue;
      }
      v.push(word, count);
    }
    return v;
  }

 private:
  friend Vocabulary build_vocab(const std::vector<std::vector<std::string>>&, std::size_t);

  void push(std::string word, std::size_t count) {
    index_.emplace(word, words_.size());
    words_.push_back(std::move(word));
    freq_.push_back(count);
  }

  std::vector<std::string> words_;
  std::vector<std::size_t> freq_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Keeps the most frequent tokens of the (training) corpus, up to max_size
// entries including the specials; frequency ties break lexicographically.
inline Vocabulary build_vocab(const std::vector<std::vector<std::string>>& corpus, std::size_t max_size) {
  std::map<std::string, std::size_t> counts;
  for (const auto& doc : corpus)
    for (const auto& tok : doc)
      if (!is_special(tok)) ++counts[tok];
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocabulary v;
  const std::size_t room = max_size > kNumSpecials ? max_size - kNumSpecials : 0;
  for (std::size_t i = 0; i < ranked.size() && i < room; ++i) v.push(ranked[i].first, ranked[i].second);
  return v;
}

}  // namespace ctxcap::corpus

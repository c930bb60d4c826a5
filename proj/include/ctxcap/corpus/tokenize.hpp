#pragma once

#include <cctype>
#include <regex>
#include <string>
#include <string_view>
#include <vector>

#include "ctxcap/corpus/vocab.hpp"

namespace ctxcap::corpus {

enum class TokenizeMode { plain, news };

namespace detail {

inline bool word_byte(unsigned char c) { return std::isalnum(c) || c >= 0x80; }

inline bool digit_at(std::string_view s, std::size_t i) {
  return i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]));
}

inline std::string news_class(const std::string& tok) {
  static const std::regex year("(19|20)[0-9]{2}");
  static const std::regex slash_date("[0-9]{1,2}/[0-9]{1,2}(/[0-9]{2,4})?");
  static const std::regex time("[0-9]{1,2}(:[0-9]{2})?(am|pm)|[0-9]{1,2}:[0-9]{2}");
  static const std::regex number("[0-9][0-9.,:/]*(st|nd|rd|th|s)?");
  if (!std::isdigit(static_cast<unsigned char>(tok[0]))) return tok;
  if (std::regex_match(tok, year) || std::regex_match(tok, slash_date)) return std::string(kSpecialTokens[kDate]);
  if (std::regex_match(tok, time)) return std::string(kSpecialTokens[kTime]);
  if (std::regex_match(tok, number)) return std::string(kSpecialTokens[kNum]);
  return tok;
}

}  // namespace detail

// Lower-cases and splits into words and single-character punctuation tokens.
// Apostrophes inside words stay ("don't"); digits keep internal . , : /
// ("3.5", "10:30"). Special tokens such as "<num>" pass through intact, so
// tokenizing the space-joined output again is the identity. In news mode
// years, slash dates, clock times and other numbers become <date>, <time>
// and <num>.
inline std::vector<std::string> tokenize(std::string_view text, TokenizeMode mode = TokenizeMode::plain) {
  std::vector<std::string> out;
  std::size_t i = 0;
  const std::size_t n = text.size();
  while (i < n) {
    const auto c = static_cast<unsigned char>(text[i]);
    if (std::isspace(c)) {
      ++i;
      continue;
    }
    if (c == '<') {
      const auto close = text.find('>', i);
      if (close != std::string_view::npos) {
        std::string cand(text.substr(i, close - i + 1));
        for (auto& ch : cand) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
        if (is_special(cand)) {
          out.push_back(std::move(cand));
          i = close + 1;
          continue;
        }
      }
    }
    if (!detail::word_byte(c)) {
      out.emplace_back(1, static_cast<char>(c));
      ++i;
      continue;
    }
    std::string tok;
    while (i < n) {
      const auto d = static_cast<unsigned char>(text[i]);
      if (detail::word_byte(d)) {
        tok.push_back(static_cast<char>(d < 0x80 ? std::tolower(d) : d));
        ++i;
      } else if (d == '\'' && i + 1 < n && detail::word_byte(static_cast<unsigned char>(text[i + 1]))) {
        tok.push_back('\'');
        ++i;
      } else if ((d == '.' || d == ',' || d == ':' || d == '/') && detail::digit_at(text, i + 1) &&
                 std::isdigit(static_cast<unsigned char>(tok.back()))) {
        tok.push_back(static_cast<char>(d));
        ++i;
      } else {
        break;
      }
    }
    if (mode == TokenizeMode::news) tok = detail::news_class(tok);
    out.push_back(std::move(tok));
  }
  return out;
}

inline std::string join(const std::vector<std::string>& tokens, std::string_view sep = " ") {
  std::string s;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) s += sep;
    s += tokens[i];
  }
  return s;
}

// Splits a token stream after sentence-final punctuation.
inline std::vector<std::vector<std::string>> split_sentences(const std::vector<std::string>& tokens) {
  std::vector<std::vector<std::string>> out;
  std::vector<std::string> cur;
  for (const auto& t : tokens) {
    cur.push_back(t);
    if (t == "." || t == "!" || t == "?") {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

}  // namespace ctxcap::corpus

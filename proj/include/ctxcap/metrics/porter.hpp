#pragma once

#include <string>
#include <string_view>

namespace ctxcap::metrics {

// Porter's 1980 suffix-stripping stemmer, original rule set (no later
// departures such as "logi" -> "log", and no guard for two-letter words, so
// "is" -> "i"). Expects lower-case input. Single letters are returned as is.
class PorterStemmer {
 public:
  std::string operator()(std::string_view word) const {
    if (word.size() <= 1) return std::string(word);
    State s{std::string(word), static_cast<int>(word.size()) - 1, 0};
    step1ab(s);
    if (s.k > 0) {
      step1c(s);
      step2(s);
      step3(s);
      step4(s);
      step5(s);
    }
    return s.b.substr(0, static_cast<std::size_t>(s.k + 1));
  }

 private:
  struct State {
    std::string b;
    int k;  // last index of the current word
    int j;  // last index of the stem before a matched suffix
  };

  static bool cons(const State& s, int i) {
    switch (s.b[static_cast<std::size_t>(i)]) {
      case 'a': case 'e': case 'i': case 'o': case 'u':
        return false;
      case 'y':
        return i == 0 ? true : !cons(s, i - 1);
      default:
        return true;
    }
  }

  // Number of vowel-consonant sequences in b[0..j].
  static int m(const State& s) {
    int n = 0, i = 0;
    for (;;) {
      if (i > s.j) return n;
      if (!cons(s, i)) break;
      ++i;
    }
    ++i;
    for (;;) {
      for (;;) {
        if (i > s.j) return n;
        if (cons(s, i)) break;
        ++i;
      }
      ++i;
      ++n;
      for (;;) {
        if (i > s.j) return n;
        if (!cons(s, i)) break;
        ++i;
      }
      ++i;
    }
  }

  static bool vowel_in_stem(const State& s) {
    for (int i = 0; i <= s.j; ++i)
      if (!cons(s, i)) return true;
    return false;
  }

  static bool double_cons(const State& s, int j) {
    return j >= 1 && s.b[static_cast<std::size_t>(j)] == s.b[static_cast<std::size_t>(j - 1)] && cons(s, j);
  }

  // consonant-vowel-consonant ending at i, the last not w, x or y
  static bool cvc(const State& s, int i) {
    if (i < 2 || !cons(s, i) || cons(s, i - 1) || !cons(s, i - 2)) return false;
    const char ch = s.b[static_cast<std::size_t>(i)];
    return ch != 'w' && ch != 'x' && ch != 'y';
  }

  static bool ends(State& s, std::string_view suffix) {
    const int len = static_cast<int>(suffix.size());
    if (len > s.k + 1) return false;
    if (std::string_view(s.b).substr(static_cast<std::size_t>(s.k + 1 - len), suffix.size()) != suffix) return false;
    s.j = s.k - len;
    return true;
  }

  static void set_to(State& s, std::string_view repl) {
    s.b.replace(static_cast<std::size_t>(s.j + 1), static_cast<std::size_t>(s.k - s.j), repl);
    s.k = s.j + static_cast<int>(repl.size());
    s.b.resize(static_cast<std::size_t>(s.k + 1));
  }

  static void r(State& s, std::string_view repl) {
    if (m(s) > 0) set_to(s, repl);
  }

  static char at(const State& s, int i) { return s.b[static_cast<std::size_t>(i)]; }

  static void step1ab(State& s) {
    if (at(s, s.k) == 's') {
      if (ends(s, "sses")) s.k -= 2;
      else if (ends(s, "ies")) set_to(s, "i");
      else if (at(s, s.k - 1) != 's') --s.k;
    }
    if (ends(s, "eed")) {
      if (m(s) > 0) --s.k;
    } else if ((ends(s, "ed") || ends(s, "ing")) && vowel_in_stem(s)) {
      s.k = s.j;
      if (ends(s, "at")) set_to(s, "ate");
      else if (ends(s, "bl")) set_to(s, "ble");
      else if (ends(s, "iz")) set_to(s, "ize");
      else if (double_cons(s, s.k)) {
        --s.k;
        const char ch = at(s, s.k);
        if (ch == 'l' || ch == 's' || ch == 'z') ++s.k;
      } else if (s.j = s.k; m(s) == 1 && cvc(s, s.k)) {
        set_to(s, "e");
      }
    }
    s.b.resize(static_cast<std::size_t>(s.k + 1));
  }

  static void step1c(State& s) {
    if (ends(s, "y") && vowel_in_stem(s)) s.b[static_cast<std::size_t>(s.k)] = 'i';
  }

  struct Rule {
    std::string_view suffix, repl;
  };

  template <std::size_t N>
  static void apply_first(State& s, const Rule (&rules)[N]) {
    for (const auto& rule : rules)
      if (ends(s, rule.suffix)) {
        r(s, rule.repl);
        return;
      }
  }

  static void step2(State& s) {
    static constexpr Rule a[] = {{"ational", "ate"}, {"tional", "tion"}};
    static constexpr Rule c[] = {{"enci", "ence"}, {"anci", "ance"}};
    static constexpr Rule e[] = {{"izer", "ize"}};
    static constexpr Rule l[] = {{"abli", "able"}, {"alli", "al"}, {"entli", "ent"}, {"eli", "e"}, {"ousli", "ous"}};
    static constexpr Rule o[] = {{"ization", "ize"}, {"ation", "ate"}, {"ator", "ate"}};
    static constexpr Rule z[] = {{"alism", "al"}, {"iveness", "ive"}, {"fulness", "ful"}, {"ousness", "ous"}};
    static constexpr Rule t[] = {{"aliti", "al"}, {"iviti", "ive"}, {"biliti", "ble"}};
    switch (at(s, s.k - 1)) {
      case 'a': apply_first(s, a); break;
      case 'c': apply_first(s, c); break;
      case 'e': apply_first(s, e); break;
      case 'l': apply_first(s, l); break;
      case 'o': apply_first(s, o); break;
      case 's': apply_first(s, z); break;
      case 't': apply_first(s, t); break;
      default: break;
    }
  }

  static void step3(State& s) {
    static constexpr Rule e[] = {{"icate", "ic"}, {"ative", ""}, {"alize", "al"}};
    static constexpr Rule i[] = {{"iciti", "ic"}};
    static constexpr Rule l[] = {{"ical", "ic"}, {"ful", ""}};
    static constexpr Rule z[] = {{"ness", ""}};
    switch (at(s, s.k)) {
      case 'e': apply_first(s, e); break;
      case 'i': apply_first(s, i); break;
      case 'l': apply_first(s, l); break;
      case 's': apply_first(s, z); break;
      default: break;
    }
  }

  static void step4(State& s) {
    auto any = [&](std::initializer_list<std::string_view> suffixes) {
      for (auto x : suffixes)
        if (ends(s, x)) return true;
      return false;
    };
    bool hit = false;
    switch (at(s, s.k - 1)) {
      case 'a': hit = any({"al"}); break;
      case 'c': hit = any({"ance", "ence"}); break;
      case 'e': hit = any({"er"}); break;
      case 'i': hit = any({"ic"}); break;
      case 'l': hit = any({"able", "ible"}); break;
      case 'n': hit = any({"ant", "ement", "ment", "ent"}); break;
      case 'o':
        hit = (ends(s, "ion") && s.j >= 0 && (at(s, s.j) == 's' || at(s, s.j) == 't')) || ends(s, "ou");
        break;
      case 's': hit = any({"ism"}); break;
      case 't': hit = any({"ate", "iti"}); break;
      case 'u': hit = any({"ous"}); break;
      case 'v': hit = any({"ive"}); break;
      case 'z': hit = any({"ize"}); break;
      default: break;
    }
    if (hit && m(s) > 1) s.k = s.j;
  }

  static void step5(State& s) {
    s.j = s.k;
    if (at(s, s.k) == 'e') {
      const int a = m(s);
      if (a > 1 || (a == 1 && !cvc(s, s.k - 1))) --s.k;
    }
    if (at(s, s.k) == 'l' && double_cons(s, s.k) && m(s) > 1) --s.k;
  }
};

inline std::string porter_stem(std::string_view word) { return PorterStemmer{}(word); }

}  // namespace ctxcap::metrics

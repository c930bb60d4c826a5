#pragma once

#include <algorithm>
#include <cctype>
#include <optional>
#include <regex>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "ctxcap/corpus/tokenize.hpp"

namespace ctxcap::corpus {

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line = 0)
      : std::runtime_error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

struct SceneHeading {
  std::string raw;
  std::string setting;      // "INT", "EXT", "INT/EXT" or empty
  std::string location;     // e.g. "SIMPSON HOUSE - KITCHEN"
  std::string time_of_day;  // e.g. "DAY", empty when absent
};

struct Dialogue {
  std::string speaker;
  std::string line;
};

struct Scene {
  SceneHeading heading;
  std::string action_text;
  std::vector<Dialogue> dialogues;

  // Action text followed by the dialogue lines, as one document.
  std::string text() const {
    std::string s = action_text;
    for (const auto& d : dialogues) {
      if (!s.empty()) s += '\n';
      s += d.line;
    }
    return s;
  }
};

struct ScriptDocument {
  std::vector<Scene> scenes;
};

namespace detail {

inline std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

inline std::size_t indent_of(std::string_view s) {
  std::size_t n = 0;
  for (char c : s) {
    if (c == ' ') n += 1;
    else if (c == '\t') n += 8;
    else break;
  }
  return n;
}

inline bool all_caps(std::string_view s) {
  bool letter = false;
  for (char ch : s) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::islower(c)) return false;
    if (std::isupper(c)) letter = true;
  }
  return letter;
}

inline std::string strip_parentheticals(std::string_view s) {
  std::string out;
  int depth = 0;
  for (char c : s) {
    if (c == '(') ++depth;
    else if (c == ')' && depth > 0) --depth;
    else if (depth == 0) out.push_back(c);
  }
  std::string collapsed;
  for (char c : out) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!collapsed.empty() && collapsed.back() != ' ') collapsed.push_back(' ');
    } else {
      collapsed.push_back(c);
    }
  }
  return trim(collapsed);
}

inline bool is_transition(const std::string& t) {
  static const std::regex re("(FADE (IN|OUT|TO BLACK)|CUT TO|DISSOLVE TO|SMASH CUT|MATCH CUT|THE END)\\b.*|.*\\bTO:$");
  return std::regex_match(t, re);
}

inline std::optional<SceneHeading> parse_heading(const std::string& t, std::size_t indent) {
  static const std::regex prefixed(R"(^(INT\.?/EXT\.?|EXT\.?/INT\.?|I/E\.?|INT\.|EXT\.|INT |EXT |INTERIOR |EXTERIOR )\s*(.*)$)");
  static const std::regex tod(R"(^(.*?)\s+-+\s*(DAY|NIGHT|MORNING|EVENING|AFTERNOON|DUSK|DAWN|LATER|CONTINUOUS|SAME|MOMENTS LATER|SUNSET|SUNRISE)\b.*$)");
  std::smatch m;
  SceneHeading h;
  h.raw = t;
  std::string rest;
  if (std::regex_match(t, m, prefixed)) {
    std::string p = m[1].str();
    p.erase(std::remove(p.begin(), p.end(), '.'), p.end());
    p = trim(p);
    if (p == "INTERIOR") p = "INT";
    if (p == "EXTERIOR") p = "EXT";
    if (p == "I/E" || p == "EXT/INT") p = "INT/EXT";
    h.setting = p;
    rest = m[2].str();
  } else if (indent <= 8 && all_caps(t) && std::regex_match(t, m, tod)) {
    rest = t;
  } else {
    return std::nullopt;
  }
  if (std::regex_match(rest, m, tod)) {
    h.location = trim(m[1].str());
    h.time_of_day = m[2].str();
  } else {
    h.location = trim(rest);
  }
  return h;
}

inline void append_text(std::string& dst, const std::string& line) {
  if (line.empty()) return;
  if (!dst.empty()) dst += '\n';
  dst += line;
}

}  // namespace detail

// Splits a plain-text screenplay into scenes. Headings are INT./EXT.-style
// slug lines or all-caps "LOCATION - DAY" lines; a speaker block is an
// all-caps name line (parentheticals such as "(V.O.)" removed) directly
// followed by dialogue lines; dialogue parentheticals are dropped. Every
// other line lands in the action text of the current scene; text before the
// first heading belongs to the first scene.
inline ScriptDocument parse_script(std::string_view text) {
  std::vector<std::string> lines;
  {
    std::string s(text);
    s.erase(std::remove(s.begin(), s.end(), '\r'), s.end());
    std::istringstream in(s);
    std::string l;
    while (std::getline(in, l)) lines.push_back(l);
  }
  bool any_indent = false;
  for (const auto& l : lines)
    if (!detail::trim(l).empty() && detail::indent_of(l) > 0) any_indent = true;

  ScriptDocument doc;
  Scene preamble;
  Scene* cur = &preamble;
  auto is_heading = [&](std::size_t k) {
    const std::string t = detail::trim(lines[k]);
    return !t.empty() && detail::parse_heading(t, detail::indent_of(lines[k])).has_value();
  };

  for (std::size_t k = 0; k < lines.size(); ++k) {
    const std::string t = detail::trim(lines[k]);
    if (t.empty()) continue;
    const std::size_t ind = detail::indent_of(lines[k]);
    if (auto h = detail::parse_heading(t, ind)) {
      doc.scenes.push_back(Scene{*h, {}, {}});
      cur = &doc.scenes.back();
      continue;
    }
    const std::string name = detail::strip_parentheticals(t);
    const bool next_is_text = k + 1 < lines.size() && !detail::trim(lines[k + 1]).empty() && !is_heading(k + 1);
    if (next_is_text && detail::all_caps(t) && !detail::is_transition(t) && !name.empty() && name.size() <= 40 &&
        (ind > 0 || !any_indent) && ind >= detail::indent_of(lines[k + 1])) {
      std::string said;
      std::size_t j = k + 1;
      for (; j < lines.size(); ++j) {
        const std::string u = detail::trim(lines[j]);
        if (u.empty() || is_heading(j)) break;
        const std::string spoken = detail::strip_parentheticals(u);
        if (spoken.empty()) continue;
        if (!said.empty()) said += ' ';
        said += spoken;
      }
      if (!said.empty()) {
        cur->dialogues.push_back({name, said});
        k = j - 1;
        continue;
      }
    }
    detail::append_text(cur->action_text, t);
  }
  if (doc.scenes.empty()) throw ParseError("not a screenplay: no scene headings found");
  if (!preamble.action_text.empty()) {
    std::string merged = preamble.action_text;
    detail::append_text(merged, doc.scenes.front().action_text);
    doc.scenes.front().action_text = merged;
  }
  doc.scenes.front().dialogues.insert(doc.scenes.front().dialogues.begin(), preamble.dialogues.begin(),
                                      preamble.dialogues.end());
  return doc;
}

// Lower-cased alphabetic tokens of all speaker names.
inline std::set<std::string> character_names(const ScriptDocument& doc) {
  std::set<std::string> names;
  for (const auto& s : doc.scenes)
    for (const auto& d : s.dialogues)
      for (const auto& tok : tokenize(d.speaker))
        if (std::all_of(tok.begin(), tok.end(), [](char c) { return std::isalpha(static_cast<unsigned char>(c)); }))
          names.insert(tok);
  return names;
}

}  // namespace ctxcap::corpus

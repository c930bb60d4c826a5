#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <regex>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "ctxcap/corpus/script.hpp"

namespace ctxcap::corpus {

struct Cue {
  std::size_t index = 0;
  std::int64_t start_ms = 0;
  std::int64_t end_ms = 0;
  std::string text;  // lines joined by '\n', markup removed

  friend bool operator==(const Cue&, const Cue&) = default;
};

struct SubtitleTrack {
  std::vector<Cue> cues;

  friend bool operator==(const SubtitleTrack&, const SubtitleTrack&) = default;
};

namespace detail {

inline std::string strip_markup(const std::string& s) {
  static const std::regex tags(R"(<[^>]*>|\{\\[^}]*\})");
  return std::regex_replace(s, tags, "");
}

inline std::string collapse_spaces(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!out.empty() && out.back() != ' ') out.push_back(' ');
    } else {
      out.push_back(c);
    }
  }
  if (!out.empty() && out.back() == ' ') out.pop_back();
  return out;
}

inline std::string format_timestamp(std::int64_t ms) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%02lld:%02lld:%02lld,%03lld", static_cast<long long>(ms / 3600000),
                static_cast<long long>(ms / 60000 % 60), static_cast<long long>(ms / 1000 % 60),
                static_cast<long long>(ms % 1000));
  return buf;
}

}  // namespace detail

// Parses SubRip text. Accepts a UTF-8 byte-order mark, CRLF line ends and
// either ',' or '.' before the milliseconds. Tags such as <i> and {\an8} are
// removed and whitespace inside each text line is collapsed. Cues come out
// sorted by start time (stable for equal starts).
inline SubtitleTrack parse_srt(std::string_view input) {
  static const std::regex stamp(
      R"(^\s*(\d+):(\d{1,2}):(\d{1,2})[,.](\d{1,3})\s*-->\s*(\d+):(\d{1,2}):(\d{1,2})[,.](\d{1,3})(\s.*)?$)");
  std::string text(input);
  if (text.rfind("\xEF\xBB\xBF", 0) == 0) text.erase(0, 3);
  text.erase(std::remove(text.begin(), text.end(), '\r'), text.end());

  std::vector<std::string> lines;
  {
    std::istringstream in(text);
    std::string l;
    while (std::getline(in, l)) lines.push_back(l);
  }
  auto millis = [](const std::smatch& m, int base) {
    std::string frac = m[base + 3].str();
    frac.resize(3, '0');
    return std::stoll(m[base].str()) * 3600000 + std::stoll(m[base + 1].str()) * 60000 +
           std::stoll(m[base + 2].str()) * 1000 + std::stoll(frac);
  };

  SubtitleTrack track;
  std::size_t k = 0;
  while (k < lines.size()) {
    if (detail::trim(lines[k]).empty()) {
      ++k;
      continue;
    }
    const std::string idx = detail::trim(lines[k]);
    if (!std::all_of(idx.begin(), idx.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); }))
      throw ParseError("expected cue index, got '" + idx + "'", k + 1);
    Cue cue;
    cue.index = std::stoull(idx);
    if (++k >= lines.size()) throw ParseError("cue " + idx + " has no timestamp line", k);
    std::smatch m;
    if (!std::regex_match(lines[k], m, stamp)) throw ParseError("malformed timestamp '" + lines[k] + "'", k + 1);
    if (std::stoi(m[2].str()) >= 60 || std::stoi(m[3].str()) >= 60 || std::stoi(m[6].str()) >= 60 ||
        std::stoi(m[7].str()) >= 60)
      throw ParseError("timestamp field out of range '" + lines[k] + "'", k + 1);
    cue.start_ms = millis(m, 1);
    cue.end_ms = millis(m, 5);
    if (cue.start_ms >= cue.end_ms) throw ParseError("cue " + idx + " does not end after it starts", k + 1);
    for (++k; k < lines.size() && !detail::trim(lines[k]).empty(); ++k) {
      const std::string body = detail::collapse_spaces(detail::strip_markup(lines[k]));
      if (body.empty()) continue;
      if (!cue.text.empty()) cue.text += '\n';
      cue.text += body;
    }
    track.cues.push_back(std::move(cue));
  }
  std::stable_sort(track.cues.begin(), track.cues.end(),
                   [](const Cue& a, const Cue& b) { return a.start_ms < b.start_ms; });
  return track;
}

inline std::string serialize_srt(const SubtitleTrack& track) {
  std::string out;
  for (const auto& c : track.cues) {
    out += std::to_string(c.index) + '\n';
    out += detail::format_timestamp(c.start_ms) + " --> " + detail::format_timestamp(c.end_ms) + '\n';
    if (!c.text.empty()) out += c.text + '\n';
    out += '\n';
  }
  return out;
}

}  // namespace ctxcap::corpus

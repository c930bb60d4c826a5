#pragma once

#include <algorithm>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "ctxcap/corpus/script.hpp"
#include "ctxcap/corpus/subtitles.hpp"
#include "ctxcap/corpus/tokenize.hpp"

namespace ctxcap::corpus {

struct AlignOptions {
  double fuzzy_threshold = 0.6;
};

enum class SceneMapping { unmapped, anchored, interpolated };

struct SceneInterval {
  std::int64_t start_ms = 0;
  std::int64_t end_ms = 0;
};

struct AlignmentMap {
  std::vector<std::optional<SceneInterval>> scenes;
  std::vector<SceneMapping> how;
  std::size_t dialogue_lines = 0;
  std::size_t matched_lines = 0;
  double score = 0.0;  // matched_lines / dialogue_lines
};

namespace detail {

// Lower-cased word tokens without punctuation.
inline std::vector<std::string> dialogue_words(const std::string& s) {
  std::vector<std::string> out;
  for (auto& t : tokenize(s))
    if (!is_punctuation(t)) out.push_back(std::move(t));
  return out;
}

inline double token_overlap(const std::set<std::string>& a, const std::set<std::string>& b) {
  if (a.empty() || b.empty()) return 0.0;
  std::size_t common = 0;
  for (const auto& t : a) common += b.count(t);
  return static_cast<double>(common) / static_cast<double>(std::max(a.size(), b.size()));
}

}  // namespace detail

// Coarse scene-to-time mapping in three rounds:
//  1. each dialogue line, in script order, anchors to the next cue whose
//     normalized text is identical;
//  2. lines still unmatched take the best cue between the neighbouring
//     anchors whose token-set overlap |A∩B|/max(|A|,|B|) reaches the threshold;
//  3. runs of unmapped scenes enclosed by two mapped scenes split the gap
//     between them evenly.
// Scenes before the first or after the last mapped scene stay unmapped.
inline AlignmentMap align_script_to_time(const ScriptDocument& script, const SubtitleTrack& subs,
                                         AlignOptions opt = {}) {
  struct Line {
    std::size_t scene;
    std::string norm;
    std::set<std::string> words;
    std::optional<std::size_t> cue;
  };
  std::vector<Line> lines;
  for (std::size_t s = 0; s < script.scenes.size(); ++s)
    for (const auto& d : script.scenes[s].dialogues) {
      auto w = detail::dialogue_words(d.line);
      lines.push_back({s, join(w), std::set<std::string>(w.begin(), w.end()), std::nullopt});
    }
  std::vector<std::string> cue_norm;
  std::vector<std::set<std::string>> cue_words;
  for (const auto& c : subs.cues) {
    auto w = detail::dialogue_words(c.text);
    cue_norm.push_back(join(w));
    cue_words.emplace_back(w.begin(), w.end());
  }

  std::size_t cursor = 0;
  for (auto& l : lines) {
    if (l.norm.empty()) continue;
    for (std::size_t c = cursor; c < cue_norm.size(); ++c)
      if (cue_norm[c] == l.norm) {
        l.cue = c;
        cursor = c + 1;
        break;
      }
  }

  std::size_t lo = 0;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].cue) {
      lo = *lines[i].cue + 1;
      continue;
    }
    std::size_t hi = cue_norm.size();
    for (std::size_t j = i + 1; j < lines.size(); ++j)
      if (lines[j].cue) {
        hi = *lines[j].cue;
        break;
      }
    double best = opt.fuzzy_threshold;
    std::optional<std::size_t> pick;
    for (std::size_t c = lo; c < hi; ++c) {
      const double r = detail::token_overlap(lines[i].words, cue_words[c]);
      if (r >= best && (!pick || r > best)) {
        best = r;
        pick = c;
      }
    }
    if (pick) {
      lines[i].cue = pick;
      lo = *pick + 1;
    }
  }

  AlignmentMap map;
  const std::size_t n = script.scenes.size();
  map.scenes.assign(n, std::nullopt);
  map.how.assign(n, SceneMapping::unmapped);
  map.dialogue_lines = lines.size();
  for (const auto& l : lines) {
    if (!l.cue) continue;
    ++map.matched_lines;
    const Cue& c = subs.cues[*l.cue];
    auto& iv = map.scenes[l.scene];
    if (!iv) {
      iv = SceneInterval{c.start_ms, c.end_ms};
    } else {
      iv->start_ms = std::min(iv->start_ms, c.start_ms);
      iv->end_ms = std::max(iv->end_ms, c.end_ms);
    }
    map.how[l.scene] = SceneMapping::anchored;
  }
  map.score = lines.empty() ? 0.0 : static_cast<double>(map.matched_lines) / static_cast<double>(lines.size());

  std::optional<std::size_t> prev;
  for (std::size_t s = 0; s < n; ++s) {
    if (map.how[s] != SceneMapping::anchored) continue;
    if (prev && s > *prev + 1) {
      const std::int64_t a = map.scenes[*prev]->end_ms;
      const std::int64_t b = std::max(a, map.scenes[s]->start_ms);
      const auto k = static_cast<std::int64_t>(s - *prev - 1);
      for (std::int64_t j = 0; j < k; ++j) {
        const std::size_t idx = *prev + 1 + static_cast<std::size_t>(j);
        map.scenes[idx] = SceneInterval{a + (b - a) * j / k, a + (b - a) * (j + 1) / k};
        map.how[idx] = SceneMapping::interpolated;
      }
    }
    prev = s;
  }
  return map;
}

// Synthesizes a subtitle track with one cue per dialogue line, in script
// order, `step_ms` apart.
inline SubtitleTrack subtitles_from_script(const ScriptDocument& script, std::int64_t step_ms = 3000) {
  SubtitleTrack t;
  std::size_t idx = 1;
  for (const auto& s : script.scenes)
    for (const auto& d : s.dialogues) {
      const auto start = static_cast<std::int64_t>(idx - 1) * step_ms;
      t.cues.push_back({idx, start, start + step_ms - 100, d.line});
      ++idx;
    }
  return t;
}

}  // namespace ctxcap::corpus

#pragma once

#include <cmath>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ctxcap/corpus/align.hpp"
#include "ctxcap/corpus/crop.hpp"
#include "ctxcap/corpus/manifest.hpp"
#include "ctxcap/corpus/overlap.hpp"
#include "ctxcap/corpus/script.hpp"
#include "ctxcap/corpus/subtitles.hpp"
#include "ctxcap/corpus/tokenize.hpp"

namespace ctxcap::corpus {

enum class CorpusMode { ad, script, news };

inline CorpusMode parse_corpus_mode(const std::string& s) {
  if (s == "ad") return CorpusMode::ad;
  if (s == "script") return CorpusMode::script;
  if (s == "news") return CorpusMode::news;
  throw std::invalid_argument("unknown corpus mode '" + s + "' (ad|script|news)");
}

struct BuildOptions {
  std::filesystem::path scripts_dir;  // <movie_id>.txt screenplays (ad, script)
  std::filesystem::path subs_dir;     // <movie_id>.srt subtitles (ad, script)
  std::filesystem::path captions;     // JSONL caption records
  std::filesystem::path out_manifest;
  CorpusMode mode = CorpusMode::ad;
  double overlap_threshold = 1.0 / 3.0;
  std::optional<std::size_t> max_context;  // default 400, or 600 in script mode
  AlignOptions align;
  std::uint64_t split_seed = 7;
  SplitFractions fractions;
};

struct BuildReport {
  std::vector<MovieOverlap> movies;
  std::map<std::string, double> alignment_score;
  std::size_t captions_in = 0;
  std::size_t dropped_unaligned = 0;  // clips whose time fell in no mapped scene
  std::size_t truncated_contexts = 0;
  std::size_t records_out = 0;
};

// One input caption line.
struct CaptionRecord {
  std::string clip_id, movie_id, features, caption, article;
  std::int64_t start_ms = 0, end_ms = 0;
};

inline std::vector<CaptionRecord> read_captions(const std::filesystem::path& path) {
  std::vector<CaptionRecord> out;
  const std::string text = read_text_file(path);
  std::size_t pos = 0, lineno = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string::npos) nl = text.size();
    const std::string line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      CaptionRecord c;
      c.clip_id = j.at("clip_id").get<std::string>();
      c.movie_id = j.at("movie_id").get<std::string>();
      c.features = j.at("features").get<std::string>();
      c.caption = j.at("caption").get<std::string>();
      c.article = j.value("article", std::string());
      c.start_ms = j.value("start_ms", std::int64_t{0});
      c.end_ms = j.value("end_ms", std::int64_t{0});
      out.push_back(std::move(c));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path.string() + " line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

namespace detail {

struct MovieScript {
  ScriptDocument doc;
  AlignmentMap map;
  std::vector<std::string> names;
};

// Scenes whose interval intersects [start, end); the nearest mapped scene
// when none does but the clip lies inside the mapped range.
inline std::optional<std::pair<std::size_t, std::size_t>> scenes_for(const AlignmentMap& m, std::int64_t start,
                                                                      std::int64_t end) {
  std::optional<std::size_t> first, last;
  for (std::size_t s = 0; s < m.scenes.size(); ++s) {
    if (!m.scenes[s]) continue;
    if (m.scenes[s]->start_ms < end && start < m.scenes[s]->end_ms) {
      if (!first) first = s;
      last = s;
    }
  }
  if (first) return std::make_pair(*first, *last);
  return std::nullopt;
}

}  // namespace detail

// Turns raw scripts, subtitles and caption records into a manifest. Contexts
// are aligned script scenes (ad, script) or the record's article (news);
// both are cropped sentence-wise. Movies below the overlap threshold are
// dropped whole, then the rest are split by movie.
inline std::vector<ManifestRecord> build_corpus(const BuildOptions& opt, BuildReport* report = nullptr) {
  BuildReport rep;
  const auto captions = read_captions(opt.captions);
  rep.captions_in = captions.size();
  const std::size_t max_ctx = opt.max_context.value_or(opt.mode == CorpusMode::script ? 600 : 400);
  const auto base = opt.captions.parent_path();
  const auto out_dir = opt.out_manifest.empty() ? base : opt.out_manifest.parent_path();

  std::map<std::string, detail::MovieScript> scripts;
  auto script_for = [&](const std::string& movie) -> const detail::MovieScript& {
    auto it = scripts.find(movie);
    if (it != scripts.end()) return it->second;
    detail::MovieScript ms;
    ms.doc = parse_script(read_text_file(opt.scripts_dir / (movie + ".txt")));
    const auto subs = parse_srt(read_text_file(opt.subs_dir / (movie + ".srt")));
    ms.map = align_script_to_time(ms.doc, subs, opt.align);
    const auto names = character_names(ms.doc);
    ms.names.assign(names.begin(), names.end());
    rep.alignment_score[movie] = ms.map.score;
    return scripts.emplace(movie, std::move(ms)).first->second;
  };

  struct Pending {
    ManifestRecord rec;
    double overlap;
  };
  std::vector<Pending> pending;
  for (const auto& c : captions) {
    std::filesystem::path feat(c.features);
    if (!feat.is_absolute()) feat = base / feat;
    if (!std::filesystem::exists(feat)) throw DataError("feature file missing: " + feat.string());

    ManifestRecord r;
    r.clip_id = c.clip_id;
    r.movie_id = c.movie_id;
    r.features = std::filesystem::relative(std::filesystem::absolute(feat), std::filesystem::absolute(out_dir)).generic_string();
    const TokenizeMode tm = opt.mode == CorpusMode::news ? TokenizeMode::news : TokenizeMode::plain;
    const auto caption = tokenize(c.caption, tm);
    r.caption = join(caption);

    std::vector<std::vector<std::string>> sentences;
    std::optional<std::size_t> center;
    if (opt.mode == CorpusMode::news) {
      sentences = split_sentences(tokenize(c.article, tm));
      r.context_source = "article:" + c.clip_id;
    } else {
      const auto& ms = script_for(c.movie_id);
      const auto span = detail::scenes_for(ms.map, c.start_ms, c.end_ms);
      if (!span) {
        ++rep.dropped_unaligned;
        continue;
      }
      // Centre on the sentence at the clip midpoint's relative position.
      std::int64_t a = ms.map.scenes[span->first]->start_ms, b = ms.map.scenes[span->second]->end_ms;
      for (std::size_t s = span->first; s <= span->second; ++s) {
        auto ss = split_sentences(tokenize(ms.doc.scenes[s].text(), tm));
        sentences.insert(sentences.end(), ss.begin(), ss.end());
      }
      if (!sentences.empty() && b > a) {
        const double rel = std::clamp(static_cast<double>((c.start_ms + c.end_ms) / 2 - a) / static_cast<double>(b - a), 0.0, 1.0);
        center = std::min(sentences.size() - 1, static_cast<std::size_t>(rel * static_cast<double>(sentences.size())));
      }
      r.context_source = "scene:" + std::to_string(span->first) + "-" + std::to_string(span->second);
      r.names = ms.names;
    }
    auto cropped = crop_context(sentences, max_ctx, opt.mode == CorpusMode::news ? CropMode::news : CropMode::script, center);
    if (cropped.truncated) ++rep.truncated_contexts;
    if (cropped.tokens.empty() || caption.empty()) {
      ++rep.dropped_unaligned;
      continue;
    }
    r.context = join(cropped.tokens);
    pending.push_back({std::move(r), compute_overlap(caption, cropped.tokens)});
  }

  auto kept = filter_movies(
      pending, opt.overlap_threshold, [](const Pending& p) { return p.rec.movie_id; },
      [](const Pending& p) { return p.overlap; }, &rep.movies);
  std::vector<ManifestRecord> records;
  for (auto& p : kept) records.push_back(std::move(p.rec));
  assign_movie_splits(records, opt.split_seed, opt.fractions);
  rep.records_out = records.size();
  if (!opt.out_manifest.empty()) write_manifest(opt.out_manifest, records);
  if (report) *report = std::move(rep);
  return records;
}

}  // namespace ctxcap::corpus

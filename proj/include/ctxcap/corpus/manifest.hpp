#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ctxcap/rng.hpp"
#include "ctxcap/tensor.hpp"

namespace ctxcap::corpus {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ManifestRecord {
  std::string clip_id;
  std::string movie_id;
  std::string features;        // feature file path, relative to the manifest's directory unless absolute
  std::string context_source;  // "scene:<first>-<last>", "article:<id>" or "synthetic"
  std::string context;         // space-joined tokens
  std::string caption;         // space-joined tokens
  std::string split;           // train | val | test
  std::vector<std::string> names;

  friend bool operator==(const ManifestRecord&, const ManifestRecord&) = default;
};

inline nlohmann::json to_json(const ManifestRecord& r) {
  return nlohmann::json{{"clip_id", r.clip_id}, {"movie_id", r.movie_id},   {"features", r.features},
                        {"context_source", r.context_source}, {"context", r.context}, {"caption", r.caption},
                        {"split", r.split},     {"names", r.names}};
}

inline ManifestRecord record_from_json(const nlohmann::json& j) {
  ManifestRecord r;
  r.clip_id = j.at("clip_id").get<std::string>();
  r.movie_id = j.at("movie_id").get<std::string>();
  r.features = j.at("features").get<std::string>();
  r.context_source = j.value("context_source", std::string());
  r.context = j.at("context").get<std::string>();
  r.caption = j.at("caption").get<std::string>();
  r.split = j.at("split").get<std::string>();
  r.names = j.value("names", std::vector<std::string>{});
  return r;
}

struct Manifest {
  std::vector<ManifestRecord> records;
  std::filesystem::path base_dir;  // where relative feature paths resolve

  std::filesystem::path feature_path(const ManifestRecord& r) const {
    std::filesystem::path p(r.features);
    return p.is_absolute() ? p : base_dir / p;
  }

  std::vector<const ManifestRecord*> split(const std::string& tag) const {
    std::vector<const ManifestRecord*> out;
    for (const auto& r : records)
      if (r.split == tag) out.push_back(&r);
    return out;
  }
};

inline std::string serialize_manifest(const std::vector<ManifestRecord>& records) {
  std::string out;
  for (const auto& r : records) out += to_json(r).dump() + '\n';
  return out;
}

inline std::vector<ManifestRecord> parse_manifest(const std::string& text) {
  std::vector<ManifestRecord> out;
  std::size_t lineno = 0, pos = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string::npos) nl = text.size();
    const std::string line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(record_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw DataError("manifest line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

inline void write_manifest(const std::filesystem::path& path, const std::vector<ManifestRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write manifest '" + path.string() + "'");
  out << serialize_manifest(records);
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  return std::string(std::istreambuf_iterator<char>(in), {});
}

inline Manifest load_manifest(const std::filesystem::path& path) {
  Manifest m;
  m.records = parse_manifest(read_text_file(path));
  m.base_dir = path.parent_path();
  return m;
}

// Feature file: "CTXF", u32 rank, rank x u64 dims, then float32 values in
// row-major order. All integers and floats little-endian.
namespace detail {

inline bool host_little_endian() {
  const std::uint16_t x = 1;
  unsigned char b;
  std::memcpy(&b, &x, 1);
  return b == 1;
}

template <class U>
void put_le(std::ostream& out, U v) {
  unsigned char buf[sizeof(U)];
  std::memcpy(buf, &v, sizeof(U));
  if (!host_little_endian()) std::reverse(buf, buf + sizeof(U));
  out.write(reinterpret_cast<const char*>(buf), sizeof(U));
}

template <class U>
U get_le(std::istream& in, const std::string& what) {
  unsigned char buf[sizeof(U)];
  if (!in.read(reinterpret_cast<char*>(buf), sizeof(U))) throw DataError(what + ": truncated feature file");
  if (!host_little_endian()) std::reverse(buf, buf + sizeof(U));
  U v;
  std::memcpy(&v, buf, sizeof(U));
  return v;
}

}  // namespace detail

inline void write_features(const std::filesystem::path& path, const Tensor<float>& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out.write("CTXF", 4);
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.shape().size()));
  for (auto d : t.shape()) detail::put_le<std::uint64_t>(out, d);
  for (float v : t.values()) detail::put_le<float>(out, v);
}

inline Tensor<float> read_features(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  const std::string what = path.string();
  if (!in) throw DataError("cannot open feature file '" + what + "'");
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "CTXF", 4) != 0) throw DataError(what + ": bad feature file magic");
  const auto rank = detail::get_le<std::uint32_t>(in, what);
  if (rank == 0 || rank > 4) throw DataError(what + ": unsupported rank " + std::to_string(rank));
  Shape shape;
  std::size_t n = 1;
  for (std::uint32_t i = 0; i < rank; ++i) {
    const auto d = detail::get_le<std::uint64_t>(in, what);
    if (d == 0 || d > (1ull << 32)) throw DataError(what + ": bad dimension");
    shape.push_back(static_cast<std::size_t>(d));
    n *= static_cast<std::size_t>(d);
  }
  std::vector<float> values(n);
  for (auto& v : values) v = detail::get_le<float>(in, what);
  if (in.peek() != std::char_traits<char>::eof()) throw DataError(what + ": trailing bytes after payload");
  return Tensor<float>(shape, std::move(values));
}

struct SplitFractions {
  double train = 0.8;
  double val = 0.1;
};

// Assigns whole movies to train/val/test. Movies are shuffled with `seed`,
// then each goes to the split furthest below its clip-count target. Every
// record of a movie gets the same tag.
inline void assign_movie_splits(std::vector<ManifestRecord>& records, std::uint64_t seed, SplitFractions f = {}) {
  std::map<std::string, std::size_t> clips;
  for (const auto& r : records) ++clips[r.movie_id];
  std::vector<std::string> movies;
  for (const auto& [m, _] : clips) movies.push_back(m);
  Rng rng(seed);
  rng.shuffle(movies);

  const double total = static_cast<double>(records.size());
  const std::array<std::string, 3> tags{"train", "val", "test"};
  const std::array<double, 3> target{f.train * total, f.val * total, (1.0 - f.train - f.val) * total};
  std::array<double, 3> have{0, 0, 0};
  std::map<std::string, std::string> tag_of;
  for (const auto& m : movies) {
    std::size_t pick = 0;
    double deficit = -1e300;
    for (std::size_t k = 0; k < 3; ++k) {
      const double d = target[k] - have[k];
      if (d > deficit) {
        deficit = d;
        pick = k;
      }
    }
    have[pick] += static_cast<double>(clips[m]);
    tag_of[m] = tags[pick];
  }
  for (auto& r : records) r.split = tag_of[r.movie_id];
}

}  // namespace ctxcap::corpus

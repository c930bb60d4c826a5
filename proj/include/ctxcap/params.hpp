#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include <nlohmann/json.hpp>

#include "ctxcap/rng.hpp"
#include "ctxcap/tensor.hpp"

namespace ctxcap {

static_assert(std::endian::native == std::endian::little, "checkpoint and feature IO assume a little-endian host");

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <class T>
constexpr const char* dtype_name() {
  if constexpr (std::is_same_v<T, float>)
    return "f32";
  else
    return "f64";
}

// Named parameters, iterated in sorted name order.
template <class T>
class ParamStore {
 public:
  explicit ParamStore(std::uint64_t seed = 0) : rng_seed_(seed), rng_(seed) {}

  // Uniform in [-k, k] with k = 1/sqrt(fan_in).
  Tensor<T>& add_uniform(const std::string& name, Shape shape, std::size_t fan_in) {
    Tensor<T> t(std::move(shape));
    const double k = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (auto& v : t.values()) v = static_cast<T>(rng_.uniform(-k, k));
    return insert(name, std::move(t));
  }

  Tensor<T>& add_zeros(const std::string& name, Shape shape) { return insert(name, Tensor<T>(std::move(shape))); }

  Tensor<T>& insert(const std::string& name, Tensor<T> t) {
    auto [it, inserted] = params_.emplace(name, std::move(t));
    if (!inserted) throw std::invalid_argument("parameter '" + name + "' already exists");
    return it->second;
  }

  bool contains(const std::string& name) const { return params_.count(name) != 0; }

  Tensor<T>& at(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
    return it->second;
  }
  const Tensor<T>& at(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
    return it->second;
  }

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }
  std::size_t size() const { return params_.size(); }

  std::size_t count() const {
    std::size_t n = 0;
    for (const auto& [_, t] : params_) n += t.size();
    return n;
  }

  void zero_grad() {
    for (auto& [_, t] : params_) t.zero_grad();
  }

  std::uint64_t rng_seed() const noexcept { return rng_seed_; }

  template <class U>
  ParamStore<U> cast() const {
    ParamStore<U> out(rng_seed_);
    for (const auto& [name, t] : params_) out.insert(name, t.template cast<U>());
    return out;
  }

  // Overwrites values of every parameter present in `other` (shapes must match).
  template <class U>
  void assign_from(const ParamStore<U>& other) {
    for (const auto& [name, src] : other) {
      Tensor<T>& dst = at(name);
      if (dst.shape() != src.shape()) throw DimensionError("assign " + name, dst.shape(), src.shape());
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(src[i]);
    }
  }

 private:
  std::uint64_t rng_seed_;
  Rng rng_;
  std::map<std::string, Tensor<T>> params_;
};

// FNV-1a over the raw value bytes; used to verify frozen parameters.
template <class T>
std::uint64_t checksum(const Tensor<T>& t) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  const auto* p = reinterpret_cast<const unsigned char*>(t.values().data());
  for (std::size_t i = 0; i < t.size() * sizeof(T); ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

// Checkpoint layout:
//   8 bytes   magic "CTXCKPT1"
//   4 bytes   little-endian u32 manifest length L
//   L bytes   JSON manifest {format, version, dtype, seed, tensors:[{name, shape, offset, bytes}]}
//   payload   raw little-endian values, concatenated in manifest order
inline constexpr char kCheckpointMagic[8] = {'C', 'T', 'X', 'C', 'K', 'P', 'T', '1'};

template <class T>
void save_checkpoint(const ParamStore<T>& params, const std::string& path) {
  nlohmann::json manifest;
  manifest["format"] = "ctxcap-checkpoint";
  manifest["version"] = 1;
  manifest["dtype"] = dtype_name<T>();
  manifest["seed"] = params.rng_seed();
  auto& list = manifest["tensors"] = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : params) {
    const std::uint64_t bytes = t.size() * sizeof(T);
    list.push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}, {"bytes", bytes}});
    offset += bytes;
  }
  const std::string header = manifest.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint '" + path + "'");
  out.write(kCheckpointMagic, sizeof kCheckpointMagic);
  const auto len = static_cast<std::uint32_t>(header.size());
  out.write(reinterpret_cast<const char*>(&len), sizeof len);
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  for (const auto& [_, t] : params)
    out.write(reinterpret_cast<const char*>(t.values().data()), static_cast<std::streamsize>(t.size() * sizeof(T)));
  if (!out) throw std::runtime_error("short write to checkpoint '" + path + "'");
}

namespace detail {

template <class Src, class T>
Tensor<T> read_tensor(std::istream& in, const Shape& shape, std::uint64_t bytes, const std::string& name) {
  const std::size_t n = shape_numel(shape);
  if (bytes != n * sizeof(Src)) throw FormatError("checkpoint: byte count mismatch for '" + name + "'");
  std::vector<Src> raw(n);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(bytes));
  if (!in) throw FormatError("checkpoint: truncated payload at '" + name + "'");
  std::vector<T> values(raw.begin(), raw.end());
  return Tensor<T>(shape, std::move(values));
}

}  // namespace detail

// Loads a checkpoint; values are converted if the stored dtype differs from T.
template <class T>
ParamStore<T> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint '" + path + "'");
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0)
    throw FormatError("'" + path + "' is not a checkpoint (bad magic)");
  std::uint32_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  std::string header(len, '\0');
  in.read(header.data(), len);
  if (!in) throw FormatError("checkpoint: truncated manifest");
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(header);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint: bad manifest: ") + e.what());
  }
  const std::string dtype = manifest.at("dtype");
  ParamStore<T> params(manifest.value("seed", std::uint64_t{0}));
  for (const auto& entry : manifest.at("tensors")) {
    const std::string name = entry.at("name");
    const Shape shape = entry.at("shape").get<Shape>();
    const std::uint64_t bytes = entry.at("bytes");
    if (dtype == "f32")
      params.insert(name, detail::read_tensor<float, T>(in, shape, bytes, name));
    else if (dtype == "f64")
      params.insert(name, detail::read_tensor<double, T>(in, shape, bytes, name));
    else
      throw FormatError("checkpoint: unknown dtype '" + dtype + "'");
  }
  return params;
}

}  // namespace ctxcap

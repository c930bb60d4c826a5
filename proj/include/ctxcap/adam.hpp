#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <stdexcept>
#include <string>

#include "ctxcap/params.hpp"

namespace ctxcap {

struct AdamState {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  // Global gradient-norm clipping threshold; 0 disables clipping.
  double clip_norm = 0.0;
  std::uint64_t step = 0;
  // Parameters excluded from updates (their gradients are not required).
  std::set<std::string> frozen;
  std::map<std::string, std::vector<double>> first_moment;
  std::map<std::string, std::vector<double>> second_moment;
};

// One bias-corrected Adam update over every non-frozen parameter, then zeroes
// all gradients. A trainable parameter without a gradient buffer is an error.
template <class T>
void adam_step(ParamStore<T>& params, AdamState& state) {
  double scale = 1.0;
  if (state.clip_norm > 0.0) {
    double sq = 0.0;
    for (auto& [name, p] : params) {
      if (state.frozen.count(name) || !p.has_grad()) continue;
      for (T g : p.grad()) sq += static_cast<double>(g) * static_cast<double>(g);
    }
    const double norm = std::sqrt(sq);
    if (norm > state.clip_norm) scale = state.clip_norm / norm;
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (auto& [name, p] : params) {
    if (state.frozen.count(name)) continue;
    if (!p.has_grad()) throw std::invalid_argument("adam_step: missing gradient for parameter '" + name + "'");
    auto& m = state.first_moment[name];
    auto& v = state.second_moment[name];
    if (m.size() != p.size()) {
      m.assign(p.size(), 0.0);
      v.assign(p.size(), 0.0);
    }
    auto g = p.grad();
    auto w = p.values();
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = static_cast<double>(g[i]) * scale;
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * gi;
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * gi * gi;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      w[i] = static_cast<T>(static_cast<double>(w[i]) - state.learning_rate * mhat / (std::sqrt(vhat) + state.epsilon));
    }
  }
  params.zero_grad();
}

}  // namespace ctxcap

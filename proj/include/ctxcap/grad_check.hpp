#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ctxcap/autodiff.hpp"
#include "ctxcap/params.hpp"
#include "ctxcap/rng.hpp"

namespace ctxcap {

struct GradCheckOptions {
  double step = 1e-5;
  // Coordinates sampled per parameter; 0 checks every coordinate.
  std::size_t max_coords_per_param = 0;
  std::uint64_t seed = 0;
  // Denominator floor of the relative error. Central differences of a loss of
  // order 1 resolve gradients only to about 1e-10 at step 1e-5, so coordinates
  // whose true gradient is far below this floor are judged on absolute error.
  double abs_floor = 1e-6;
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t coords_checked = 0;
};

using LossFn = std::function<Var<double>(Tape<double>&)>;

// Compares reverse-mode gradients of a scalar loss against central
// differences. The loss function must read the parameters in `params` (via
// Tape::parameter) and be deterministic.
inline GradCheckResult grad_check(const LossFn& loss_fn, ParamStore<double>& params, GradCheckOptions opt = {}) {
  auto eval = [&] {
    Tape<double> tape;
    const double v = loss_fn(tape).item();
    if (!std::isfinite(v)) throw NumericError("grad_check: non-finite loss");
    return v;
  };

  params.zero_grad();
  {
    Tape<double> tape;
    Var<double> loss = loss_fn(tape);
    if (!std::isfinite(loss.item())) throw NumericError("grad_check: non-finite loss");
    tape.backward(loss);
  }

  GradCheckResult result;
  Rng rng(opt.seed);
  for (auto& [name, p] : params) {
    std::vector<double> analytic(p.size(), 0.0);
    if (p.has_grad()) std::copy(p.grad().begin(), p.grad().end(), analytic.begin());
    std::vector<std::size_t> coords(p.size());
    for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
    if (opt.max_coords_per_param && coords.size() > opt.max_coords_per_param) {
      rng.shuffle(coords);
      coords.resize(opt.max_coords_per_param);
      std::sort(coords.begin(), coords.end());
    }
    for (std::size_t i : coords) {
      const double orig = p[i];
      p[i] = orig + opt.step;
      const double up = eval();
      p[i] = orig - opt.step;
      const double down = eval();
      p[i] = orig;
      const double numeric = (up - down) / (2.0 * opt.step);
      const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), opt.abs_floor});
      const double rel = std::abs(analytic[i] - numeric) / denom;
      ++result.coords_checked;
      if (rel > result.max_relative_error || result.worst_param.empty()) {
        result.max_relative_error = rel;
        result.worst_param = name;
        result.worst_index = i;
        result.analytic = analytic[i];
        result.numeric = numeric;
      }
    }
  }
  params.zero_grad();
  return result;
}

}  // namespace ctxcap

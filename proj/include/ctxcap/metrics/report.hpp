#pragma once

#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ctxcap/metrics/cider.hpp"
#include "ctxcap/metrics/diagnostics.hpp"
#include "ctxcap/metrics/meteor.hpp"
#include "ctxcap/metrics/rouge.hpp"

namespace ctxcap::metrics {

inline const std::set<std::string>& known_metrics() {
  static const std::set<std::string> m = {"rouge", "cider", "meteor", "names", "rep"};
  return m;
}

// Values are fractions. `corpus` holds the aggregate of every requested
// metric that is defined ("names" is absent without reference names; "cider"
// needs two or more samples).
struct ScoreReport {
  std::map<std::string, std::vector<double>> per_sample;
  std::map<std::string, double> corpus;
  std::size_t samples = 0;

  // Percentages, with CIDEr on its customary x10 scale on top.
  nlohmann::json to_json() const {
    nlohmann::json j;
    j["samples"] = samples;
    for (const auto& [k, v] : corpus) j["corpus"][k] = k == "cider" ? v * 1000.0 : v * 100.0;
    j["units"] = "percent; cider is 100 x the conventional CIDEr-D value";
    return j;
  }
};

inline double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

inline ScoreReport evaluate(const std::vector<Tokens>& predictions, const std::vector<Tokens>& references,
                            const std::vector<std::set<std::string>>& name_sets, const std::set<std::string>& which) {
  if (predictions.size() != references.size()) throw std::invalid_argument("evaluate: prediction/reference count mismatch");
  for (const auto& w : which)
    if (!known_metrics().count(w)) throw std::invalid_argument("unknown metric '" + w + "'");
  ScoreReport r;
  r.samples = predictions.size();
  if (which.count("rouge")) {
    auto& v = r.per_sample["rouge"];
    for (std::size_t i = 0; i < predictions.size(); ++i) v.push_back(rouge_l(predictions[i], references[i]));
    r.corpus["rouge"] = mean(v);
  }
  if (which.count("meteor")) {
    auto& v = r.per_sample["meteor"];
    for (std::size_t i = 0; i < predictions.size(); ++i) v.push_back(meteor_lite(predictions[i], references[i]));
    r.corpus["meteor"] = mean(v);
  }
  if (which.count("cider") && predictions.size() >= 2) {
    auto c = cider(predictions, references);
    r.per_sample["cider"] = c.per_sample;
    r.corpus["cider"] = c.corpus;
  }
  if (which.count("rep")) {
    auto& v = r.per_sample["rep"];
    for (const auto& p : predictions) v.push_back(repetition_rate(p));
    r.corpus["rep"] = mean(v);
  }
  if (which.count("names")) {
    if (auto nr = name_recovery(predictions, references, name_sets)) r.corpus["names"] = *nr;
  }
  return r;
}

}  // namespace ctxcap::metrics
